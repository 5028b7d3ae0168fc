/** Minimal OBJ / PLY readers for the dataset's mesh flavor.
 *
 * The service stores vertex colors as per-vertex red/green/blue
 * properties. PLY colors may be float/double in [0,1] or uchar in
 * [0,255] (normalized here); OBJ uses 6-float vertex lines
 * (`v x y z r g b`). Stock loaders assume uchar colors, hence the
 * hand-rolled parser.
 */

export interface MeshData {
  positions: Float32Array;
  colors: Float32Array;
  indices: Uint32Array;
}

export class MeshParseError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "MeshParseError";
  }
}

export function parseMesh(buffer: ArrayBuffer, name: string): MeshData {
  const ext = name.split("?")[0].split(".").pop()?.toLowerCase();
  if (ext === "obj") return parseObj(new TextDecoder().decode(buffer));
  if (ext === "ply") return parsePly(buffer);
  throw new MeshParseError(`unsupported mesh format: ${name}`);
}

export function parseObj(text: string): MeshData {
  const positions: number[] = [];
  const colors: number[] = [];
  const indices: number[] = [];
  for (const raw of text.split("\n")) {
    const line = raw.trim();
    if (line.startsWith("v ")) {
      const vals = line.slice(2).trim().split(/\s+/).map(Number);
      if (vals.length < 3 || vals.some(Number.isNaN)) {
        throw new MeshParseError(`bad vertex line: ${line}`);
      }
      positions.push(vals[0], vals[1], vals[2]);
      if (vals.length >= 6) colors.push(vals[3], vals[4], vals[5]);
      else colors.push(0.7, 0.7, 0.7);
    } else if (line.startsWith("f ")) {
      // indices only (no texcoord/normal refs in this dataset), 1-based
      const refs = line.slice(2).trim().split(/\s+/).map((t) => parseInt(t, 10) - 1);
      for (let i = 1; i + 1 < refs.length; i++) indices.push(refs[0], refs[i], refs[i + 1]);
    }
  }
  if (positions.length === 0) throw new MeshParseError("OBJ contains no vertices");
  return {
    positions: new Float32Array(positions),
    colors: new Float32Array(colors),
    indices: new Uint32Array(indices),
  };
}

interface PlyProperty {
  name: string;
  type: string;
  countType?: string; // set for list properties
  itemType?: string;
}

interface PlyElement {
  name: string;
  count: number;
  properties: PlyProperty[];
}

const TYPE_SIZES: Record<string, number> = {
  char: 1, int8: 1, uchar: 1, uint8: 1,
  short: 2, int16: 2, ushort: 2, uint16: 2,
  int: 4, int32: 4, uint: 4, uint32: 4,
  float: 4, float32: 4, double: 8, float64: 8,
};

export function parsePly(buffer: ArrayBuffer): MeshData {
  const bytes = new Uint8Array(buffer);
  const headerEnd = findHeaderEnd(bytes);
  const header = new TextDecoder().decode(bytes.subarray(0, headerEnd));
  const lines = header.split("\n").map((l) => l.trim()).filter((l) => l.length > 0);
  if (lines[0] !== "ply") throw new MeshParseError("not a PLY file");

  let format = "";
  const elements: PlyElement[] = [];
  for (const line of lines.slice(1)) {
    const parts = line.split(/\s+/);
    if (parts[0] === "format") {
      format = parts[1];
    } else if (parts[0] === "element") {
      elements.push({ name: parts[1], count: parseInt(parts[2], 10), properties: [] });
    } else if (parts[0] === "property") {
      const el = elements[elements.length - 1];
      if (!el) throw new MeshParseError("property before element");
      if (parts[1] === "list") {
        el.properties.push({ name: parts[4], type: "list", countType: parts[2], itemType: parts[3] });
      } else {
        el.properties.push({ name: parts[2], type: parts[1] });
      }
    } else if (parts[0] === "end_header") {
      break;
    }
  }
  if (format !== "ascii" && format !== "binary_little_endian") {
    throw new MeshParseError(`unsupported PLY format: ${format}`);
  }

  const reader =
    format === "ascii"
      ? makeAsciiReader(new TextDecoder().decode(bytes.subarray(headerEnd)))
      : makeBinaryReader(new DataView(buffer, headerEnd));

  const positions: number[] = [];
  const colors: number[] = [];
  const indices: number[] = [];
  for (const el of elements) {
    for (let i = 0; i < el.count; i++) {
      const vertex: Record<string, number> = {};
      for (const prop of el.properties) {
        if (prop.type === "list") {
          const n = reader.scalar(prop.countType!);
          const items: number[] = [];
          for (let k = 0; k < n; k++) items.push(reader.scalar(prop.itemType!));
          if (el.name === "face") {
            for (let k = 1; k + 1 < items.length; k++) indices.push(items[0], items[k], items[k + 1]);
          }
        } else {
          vertex[prop.name] = normalizeProp(prop, reader.scalar(prop.type));
        }
      }
      if (el.name === "vertex") {
        positions.push(vertex.x ?? 0, vertex.y ?? 0, vertex.z ?? 0);
        if ("red" in vertex) colors.push(vertex.red, vertex.green ?? 0, vertex.blue ?? 0);
        else colors.push(0.7, 0.7, 0.7);
      }
    }
  }
  if (positions.length === 0) throw new MeshParseError("PLY contains no vertices");
  return {
    positions: new Float32Array(positions),
    colors: new Float32Array(colors),
    indices: new Uint32Array(indices),
  };
}

function normalizeProp(prop: PlyProperty, value: number): number {
  if (prop.name === "red" || prop.name === "green" || prop.name === "blue") {
    if (prop.type === "uchar" || prop.type === "uint8") return value / 255;
  }
  return value;
}

function findHeaderEnd(bytes: Uint8Array): number {
  const marker = new TextEncoder().encode("end_header\n");
  outer: for (let i = 0; i + marker.length <= bytes.length; i++) {
    for (let j = 0; j < marker.length; j++) {
      if (bytes[i + j] !== marker[j]) continue outer;
    }
    return i + marker.length;
  }
  throw new MeshParseError("PLY header not terminated");
}

interface ScalarReader {
  scalar(type: string): number;
}

function makeAsciiReader(body: string): ScalarReader {
  const tokens = body.trim().split(/\s+/);
  let pos = 0;
  return {
    scalar() {
      if (pos >= tokens.length) throw new MeshParseError("unexpected end of PLY body");
      const v = Number(tokens[pos++]);
      if (Number.isNaN(v)) throw new MeshParseError(`bad PLY token: ${tokens[pos - 1]}`);
      return v;
    },
  };
}

function makeBinaryReader(view: DataView): ScalarReader {
  let offset = 0;
  return {
    scalar(type: string) {
      const size = TYPE_SIZES[type];
      if (!size) throw new MeshParseError(`unknown PLY type: ${type}`);
      if (offset + size > view.byteLength) throw new MeshParseError("unexpected end of PLY body");
      let v: number;
      switch (type) {
        case "char": case "int8": v = view.getInt8(offset); break;
        case "uchar": case "uint8": v = view.getUint8(offset); break;
        case "short": case "int16": v = view.getInt16(offset, true); break;
        case "ushort": case "uint16": v = view.getUint16(offset, true); break;
        case "int": case "int32": v = view.getInt32(offset, true); break;
        case "uint": case "uint32": v = view.getUint32(offset, true); break;
        case "float": case "float32": v = view.getFloat32(offset, true); break;
        default: v = view.getFloat64(offset, true); break;
      }
      offset += size;
      return v;
    },
  };
}
