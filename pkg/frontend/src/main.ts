/** DOM wiring: start form, dual viewer, vote buttons, completion table. */

import { ApiClient, ApiError } from "./api.js";
import { parseMesh, MeshParseError } from "./mesh.js";
import { MeshPane } from "./render.js";
import { SessionViewModel } from "./session.js";
import { DualViewState } from "./viewer.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const api = new ApiClient("");
const vm = new SessionViewModel(api);
const views = new DualViewState();
const panes = {
  left: new MeshPane($<HTMLCanvasElement>("pane-left")),
  right: new MeshPane($<HTMLCanvasElement>("pane-right")),
};

const startForm = $<HTMLFormElement>("start-form");
const subjectInput = $<HTMLInputElement>("subject");
const groupSelect = $<HTMLSelectElement>("group");
const startScreen = $("start-screen");
const voteScreen = $("vote-screen");
const doneScreen = $("done-screen");
const errorBanner = $("error-banner");
const roundBadge = $("round-badge");
const voteButtons = {
  left: $<HTMLButtonElement>("vote-left"),
  right: $<HTMLButtonElement>("vote-right"),
};
const pauseButton = $<HTMLButtonElement>("pause");
const lightAz = $<HTMLInputElement>("light-az");
const lightEl = $<HTMLInputElement>("light-el");
const scoreTable = $("score-table");

const meshBroken = { left: false, right: false };
let shownPairKey = "";

async function loadGroups(): Promise<void> {
  try {
    const res = await api.groups();
    groupSelect.innerHTML = "";
    for (const g of res.groups) {
      const opt = document.createElement("option");
      opt.value = g.id;
      opt.textContent = `${g.id} (${g.meshes.length} meshes)`;
      groupSelect.appendChild(opt);
    }
  } catch (err) {
    showError(err);
  }
}

async function loadPairMeshes(): Promise<void> {
  const pair = vm.pair;
  if (!pair) return;
  const key = `${pair.left}|${pair.right}`;
  if (key === shownPairKey) return;
  shownPairKey = key;
  for (const side of ["left", "right"] as const) {
    const url = side === "left" ? pair.meshUrlLeft : pair.meshUrlRight;
    meshBroken[side] = false;
    try {
      const buffer = await api.fetchMesh(url);
      panes[side].setMesh(parseMesh(buffer, url));
    } catch (err) {
      // a pane-level failure disables voting rather than the whole session
      meshBroken[side] = true;
      panes[side].clearMesh();
      if (!(err instanceof MeshParseError) && !(err instanceof ApiError)) throw err;
    }
  }
  sync();
}

function sync(): void {
  startScreen.hidden = vm.phase !== "idle" && vm.phase !== "starting" && vm.phase !== "error";
  voteScreen.hidden = !(vm.phase === "voting" || vm.phase === "loading");
  doneScreen.hidden = vm.phase !== "complete";
  errorBanner.hidden = vm.errorMessage === null;
  errorBanner.textContent = vm.errorMessage ?? "";

  if (vm.phase === "voting") {
    roundBadge.textContent = `round ${vm.round}/${vm.roundsTotal} — vote ${vm.votesCast + 1}`;
    const blocked = meshBroken.left || meshBroken.right;
    voteButtons.left.disabled = !vm.canVote || blocked;
    voteButtons.right.disabled = !vm.canVote || blocked;
    void loadPairMeshes();
  }
  if (vm.phase === "complete" && vm.scores) {
    const rows = Object.entries(vm.scores)
      .sort((a, b) => b[1] - a[1])
      .map(([mesh, score]) => `<tr><td>${mesh}</td><td>${score.toFixed(3)}</td></tr>`);
    scoreTable.innerHTML = `<tr><th>mesh</th><th>score</th></tr>${rows.join("")}`;
  }
}

function showError(err: unknown): void {
  errorBanner.hidden = false;
  errorBanner.textContent = err instanceof Error ? err.message : String(err);
}

startForm.addEventListener("submit", (ev) => {
  ev.preventDefault();
  void vm.start(subjectInput.value.trim() || "anonymous", groupSelect.value);
});
voteButtons.left.addEventListener("click", () => void vm.vote("left"));
voteButtons.right.addEventListener("click", () => void vm.vote("right"));
pauseButton.addEventListener("click", () => {
  const s = views.pane("left");
  s.paused = !s.paused;
  pauseButton.textContent = s.paused ? "resume" : "pause";
});
lightAz.addEventListener("input", () => {
  views.pane("left").lightAzimuthDeg = Number(lightAz.value);
});
lightEl.addEventListener("input", () => {
  views.pane("left").lightElevationDeg = Number(lightEl.value);
});
document.addEventListener("keydown", (ev) => {
  if (ev.key === "ArrowLeft") views.pane("left").scrub(-5);
  if (ev.key === "ArrowRight") views.pane("left").scrub(5);
});

vm.onChange(sync);

let last = performance.now();
function frame(now: number): void {
  views.advance((now - last) / 1000);
  last = now;
  if (!voteScreen.hidden) {
    panes.left.render(views.params("left"));
    panes.right.render(views.params("right"));
  }
  requestAnimationFrame(frame);
}
requestAnimationFrame(frame);

void loadGroups();
sync();
