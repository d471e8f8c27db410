/**
 * Binary tensor file format shared with the Python side.
 *
 * Little-endian header: magic "MVTF", u32 version (1), u32 dtype code
 * (1 = float32, 2 = float64), u32 layout tag, u32 algebra dimension k,
 * u32 ndim, then ndim x u64 shape entries, followed by the raw payload.
 * Fixture payloads are float32 by contract; float64 is representable so a
 * reader can reject it explicitly.
 */

import { readFileSync, writeFileSync } from "node:fs";

export const MAGIC = "MVTF";
export const VERSION = 1;

export enum LayoutTag {
  Generic = 0,
  ConvInput = 1,
  ConvOutput = 2,
  ConvFilters = 3,
  ConvBias = 4,
  PackedInput = 5,
  PackedOutput = 6,
  PackedFilters = 7,
  LinearInput = 8,
  LinearOutput = 9,
  LinearWeight = 10,
  LinearBias = 11,
  ActivationInput = 12,
  ActivationOutput = 13,
}

export interface Tensor {
  data: Float32Array;
  shape: number[];
  tag: LayoutTag;
  k: number;
}

const HEADER_FIXED = 4 + 4 * 5;

export function numel(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

export function writeTensor(path: string, t: Tensor): void {
  const header = Buffer.alloc(HEADER_FIXED + 8 * t.shape.length);
  header.write(MAGIC, 0, "ascii");
  header.writeUInt32LE(VERSION, 4);
  header.writeUInt32LE(1, 8); // dtype: float32
  header.writeUInt32LE(t.tag, 12);
  header.writeUInt32LE(t.k, 16);
  header.writeUInt32LE(t.shape.length, 20);
  t.shape.forEach((dim, i) => header.writeBigUInt64LE(BigInt(dim), HEADER_FIXED + 8 * i));
  if (t.data.length !== numel(t.shape)) {
    throw new Error(`payload has ${t.data.length} values, shape wants ${numel(t.shape)}`);
  }
  const payload = Buffer.from(t.data.buffer, t.data.byteOffset, t.data.byteLength);
  writeFileSync(path, Buffer.concat([header, payload]));
}

/** Write a float64 payload; only used to exercise the server's dtype check. */
export function writeTensorF64(path: string, data: Float64Array, shape: number[], tag: LayoutTag, k: number): void {
  const header = Buffer.alloc(HEADER_FIXED + 8 * shape.length);
  header.write(MAGIC, 0, "ascii");
  header.writeUInt32LE(VERSION, 4);
  header.writeUInt32LE(2, 8); // dtype: float64
  header.writeUInt32LE(tag, 12);
  header.writeUInt32LE(k, 16);
  header.writeUInt32LE(shape.length, 20);
  shape.forEach((dim, i) => header.writeBigUInt64LE(BigInt(dim), HEADER_FIXED + 8 * i));
  writeFileSync(path, Buffer.concat([header, Buffer.from(data.buffer, data.byteOffset, data.byteLength)]));
}

export function readTensor(path: string): Tensor {
  const buf = readFileSync(path);
  if (buf.length < HEADER_FIXED) throw new Error(`${path}: truncated tensor file`);
  if (buf.toString("ascii", 0, 4) !== MAGIC) throw new Error(`${path}: bad magic`);
  const version = buf.readUInt32LE(4);
  if (version !== VERSION) throw new Error(`${path}: unsupported version ${version}`);
  const dtype = buf.readUInt32LE(8);
  if (dtype !== 1) throw new Error(`${path}: dtype code ${dtype}, expected float32`);
  const tag = buf.readUInt32LE(12) as LayoutTag;
  const k = buf.readUInt32LE(16);
  const ndim = buf.readUInt32LE(20);
  const shape: number[] = [];
  for (let i = 0; i < ndim; i++) {
    shape.push(Number(buf.readBigUInt64LE(HEADER_FIXED + 8 * i)));
  }
  const off = HEADER_FIXED + 8 * ndim;
  const n = numel(shape);
  if (buf.length - off !== 4 * n) {
    throw new Error(`${path}: payload is ${buf.length - off} bytes, expected ${4 * n}`);
  }
  // copy into an aligned buffer; fs buffers may sit at odd offsets
  const aligned = Uint8Array.prototype.slice.call(buf, off);
  return { data: new Float32Array(aligned.buffer, 0, n), shape, tag, k };
}
