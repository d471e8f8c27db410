/**
 * Clifford basic-block parity and timing: conv -> multivector activation
 * -> conv, run once through the bound native kernels and once through the
 * plain TypeScript reference, comparing outputs and mean runtimes.
 *
 * Native timings are end-to-end across the serve protocol (file exchange
 * included) with the server-reported kernel-only time alongside; there is
 * deliberately no pass/fail speedup threshold here, only a parity bound.
 */

import { KernelClient } from "./client.js";
import {
  ActivationSpec,
  AggMode,
  ConvDims,
  activationForward,
  convForward,
  dOut,
  maxRelError,
} from "./reference.js";
import { Rng } from "./rng.js";
import { LayoutTag, Tensor } from "./tensorfile.js";

export interface BlockSpec {
  g: number[];
  B: number;
  Cin: number;
  Cmid: number;
  Cout: number;
  dImage: number;
  dFilter1: number;
  dFilter2: number;
  mode: AggMode;
  seed: number;
}

export interface BlockData {
  input: Float32Array;
  filters1: Float32Array;
  bias1: Float32Array;
  actWeight?: Float32Array;
  actBias?: Float32Array;
  filters2: Float32Array;
  bias2: Float32Array;
}

export interface BackendTiming {
  meanS: number;
  runs: number;
}

export interface BlockReport {
  spec: BlockSpec;
  maxRelError: number;
  tolerance: number;
  parityOk: boolean;
  native: BackendTiming & { kernelMeanS: number };
  reference: BackendTiming;
  workingSetBytes: number;
  nativeOut: Float32Array;
  referenceOut: Float32Array;
}

const PARITY_TOLERANCE = 1e-3;

function pow(base: number, exp: number): number {
  let out = 1;
  for (let i = 0; i < exp; i++) out *= base;
  return out;
}

export function convDims1(spec: BlockSpec): ConvDims {
  return {
    B: spec.B,
    Cin: spec.Cin,
    Cout: spec.Cmid,
    dImage: spec.dImage,
    dFilter: spec.dFilter1,
    k: spec.g.length,
  };
}

export function convDims2(spec: BlockSpec): ConvDims {
  return {
    B: spec.B,
    Cin: spec.Cmid,
    Cout: spec.Cout,
    dImage: dOut(convDims1(spec)),
    dFilter: spec.dFilter2,
    k: spec.g.length,
  };
}

/** Bytes of the block input plus every parameter tensor (float32). */
export function workingSetBytes(spec: BlockSpec): number {
  const k = spec.g.length;
  const nb = 1 << k;
  const d1 = convDims1(spec);
  const d2 = convDims2(spec);
  let values =
    spec.B * spec.Cin * pow(spec.dImage, k) * nb +
    nb * d1.Cin * d1.Cout * pow(d1.dFilter, k) +
    nb * d1.Cout +
    nb * d2.Cin * d2.Cout * pow(d2.dFilter, k) +
    nb * d2.Cout;
  if (spec.mode === "linear") values += spec.Cmid * nb + spec.Cmid;
  return 4 * values;
}

export function buildBlockData(spec: BlockSpec): BlockData {
  const k = spec.g.length;
  const nb = 1 << k;
  const rng = new Rng(spec.seed);
  const d1 = convDims1(spec);
  const d2 = convDims2(spec);
  const q1 = pow(spec.dFilter1, k);
  const q2 = pow(spec.dFilter2, k);
  const scale1 = 0.5 / Math.sqrt(spec.Cin * q1 * nb);
  const scale2 = 0.5 / Math.sqrt(spec.Cmid * q2 * nb);
  const data: BlockData = {
    input: rng.normals(spec.B * spec.Cin * pow(spec.dImage, k) * nb),
    filters1: rng.normals(nb * d1.Cin * d1.Cout * q1, scale1),
    bias1: rng.normals(nb * d1.Cout, 0.1),
    filters2: rng.normals(nb * d2.Cin * d2.Cout * q2, scale2),
    bias2: rng.normals(nb * d2.Cout, 0.1),
  };
  if (spec.mode === "linear") {
    data.actWeight = rng.normals(spec.Cmid * nb, 1 / Math.sqrt(nb));
    data.actBias = rng.normals(spec.Cmid, 0.1);
  }
  return data;
}

export function referenceBlockForward(spec: BlockSpec, data: BlockData): Float32Array {
  const k = spec.g.length;
  const nb = 1 << k;
  const d1 = convDims1(spec);
  const d2 = convDims2(spec);
  const actSpec: ActivationSpec = {
    mode: spec.mode,
    kernelIndices: Array.from({ length: nb }, (_, i) => i),
    weight: data.actWeight,
    bias: data.actBias,
  };
  const y1 = convForward(data.input, data.filters1, data.bias1, d1, spec.g);
  const y2 = activationForward(y1, spec.B, spec.Cmid, pow(dOut(d1), k), nb, actSpec);
  return convForward(y2, data.filters2, data.bias2, d2, spec.g);
}

export async function runBlock(
  client: KernelClient,
  spec: BlockSpec,
  opts: { runs?: number; data?: BlockData; convVariant?: string } = {},
): Promise<BlockReport> {
  const runs = opts.runs ?? 5;
  const convVariant = opts.convVariant ?? "specialized";
  if (runs < 5) throw new Error("timing report needs at least 5 runs");
  const k = spec.g.length;
  const nb = 1 << k;
  const data = opts.data ?? buildBlockData(spec);
  const d1 = convDims1(spec);
  const d2 = convDims2(spec);

  const conv1 = await client.createConv(d1, spec.g, data.filters1, data.bias1);
  const act = await client.createActivation(
    spec.g,
    spec.mode,
    Array.from({ length: nb }, (_, i) => i),
    data.actWeight ? { data: data.actWeight, C: spec.Cmid } : undefined,
    data.actBias,
  );
  const conv2 = await client.createConv(d2, spec.g, data.filters2, data.bias2);

  const inputTensor: Tensor = {
    data: data.input,
    shape: [spec.B, spec.Cin, pow(spec.dImage, k), nb],
    tag: LayoutTag.ConvInput,
    k,
  };

  const nativeForward = async () => {
    const t0 = process.hrtime.bigint();
    const y1 = await conv1.forward(inputTensor, convVariant);
    const midShape = [spec.B, spec.Cmid, pow(dOut(d1), k), nb];
    const y2 = await act.forward({ ...y1.tensor, shape: midShape, tag: LayoutTag.ActivationInput });
    const y3 = await conv2.forward({ ...y2.tensor, tag: LayoutTag.ConvInput }, convVariant);
    const wall = Number(process.hrtime.bigint() - t0) / 1e9;
    return { out: y3.tensor.data, wall, kernel: y1.elapsedS + y2.elapsedS + y3.elapsedS };
  };

  // parity first (never timed), then timed runs
  const nativeOut = (await nativeForward()).out;
  const referenceOut = referenceBlockForward(spec, data);
  const err = maxRelError(nativeOut, referenceOut);

  const nativeWall: number[] = [];
  const nativeKernel: number[] = [];
  for (let i = 0; i < runs; i++) {
    const r = await nativeForward();
    nativeWall.push(r.wall);
    nativeKernel.push(r.kernel);
  }
  const refWall: number[] = [];
  for (let i = 0; i < runs; i++) {
    const t0 = process.hrtime.bigint();
    referenceBlockForward(spec, data);
    refWall.push(Number(process.hrtime.bigint() - t0) / 1e9);
  }

  await conv1.close();
  await act.close();
  await conv2.close();

  const mean = (xs: number[]) => xs.reduce((a, b) => a + b, 0) / xs.length;
  return {
    spec,
    maxRelError: err,
    tolerance: PARITY_TOLERANCE,
    parityOk: err <= PARITY_TOLERANCE,
    native: { meanS: mean(nativeWall), kernelMeanS: mean(nativeKernel), runs },
    reference: { meanS: mean(refWall), runs },
    workingSetBytes: workingSetBytes(spec),
    nativeOut,
    referenceOut,
  };
}

export function renderReport(r: BlockReport): string {
  const lines = [
    `block k=${r.spec.g.length} sig=(${r.spec.g.join(",")}) mode=${r.spec.mode} ` +
      `B=${r.spec.B} C=${r.spec.Cin}->${r.spec.Cmid}->${r.spec.Cout} ` +
      `d=${r.spec.dImage} filters=${r.spec.dFilter1}/${r.spec.dFilter2}`,
    `working set ${(r.workingSetBytes / 1024).toFixed(1)} KiB`,
    `parity max_rel_err=${r.maxRelError.toExponential(2)} tol=${r.tolerance.toExponential(0)} ` +
      (r.parityOk ? "OK" : "FAIL"),
    `native    mean ${(r.native.meanS * 1e3).toFixed(2)} ms over ${r.native.runs} runs ` +
      `(kernel-only ${(r.native.kernelMeanS * 1e3).toFixed(2)} ms)`,
    `reference mean ${(r.reference.meanS * 1e3).toFixed(2)} ms over ${r.reference.runs} runs`,
  ];
  return lines.join("\n");
}
