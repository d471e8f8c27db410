/**
 * Plain TypeScript reference implementations of the three layer kinds,
 * written for clarity, not speed: direct loop nests with float64
 * accumulation (JS numbers). These are the host-environment baseline the
 * native kernels are compared and timed against.
 *
 * Layouts match the protocol: conv input (B, C_in, d_image^k, N_B),
 * filters (N_B, C_in, C_out, d_filter^k), bias (N_B, C_out), output
 * (B, C_out, d_out^k, N_B); linear input (B, C_in, N_B), weight
 * (N_B, C_out, C_in); activation input (B, C, N_B) or spatial
 * (B, C, P, N_B) with the gate applied per position.
 */

import { productTable } from "./algebra.js";

export interface ConvDims {
  B: number;
  Cin: number;
  Cout: number;
  dImage: number;
  dFilter: number;
  k: number;
}

export function dOut(dims: ConvDims): number {
  return dims.dImage - dims.dFilter + 1;
}

function pow(base: number, exp: number): number {
  let out = 1;
  for (let i = 0; i < exp; i++) out *= base;
  return out;
}

/** Row-major coordinates of every cell in a k-dim cube of side d. */
function coords(d: number, k: number): number[][] {
  let out: number[][] = [[]];
  for (let axis = 0; axis < k; axis++) {
    const next: number[][] = [];
    for (const prefix of out) {
      for (let c = 0; c < d; c++) next.push([...prefix, c]);
    }
    out = next;
  }
  return out;
}

export function convForward(
  x: Float32Array,
  filters: Float32Array,
  bias: Float32Array,
  dims: ConvDims,
  g: number[],
): Float32Array {
  const table = productTable(g);
  const nb = table.nBlades;
  const dout = dOut(dims);
  const pIn = pow(dims.dImage, dims.k);
  const pOutN = pow(dout, dims.k);
  const q = pow(dims.dFilter, dims.k);
  if (x.length !== dims.B * dims.Cin * pIn * nb) throw new Error("conv input size mismatch");
  if (filters.length !== nb * dims.Cin * dims.Cout * q) throw new Error("conv filters size mismatch");
  if (bias.length !== nb * dims.Cout) throw new Error("conv bias size mismatch");

  // flat input index for (output position, filter position)
  const outCoords = coords(dout, dims.k);
  const filCoords = coords(dims.dFilter, dims.k);
  const inIndex = new Int32Array(pOutN * q);
  for (let o = 0; o < pOutN; o++) {
    for (let f = 0; f < q; f++) {
      let flat = 0;
      for (let axis = 0; axis < dims.k; axis++) {
        flat = flat * dims.dImage + outCoords[o][axis] + filCoords[f][axis];
      }
      inIndex[o * q + f] = flat;
    }
  }

  const out = new Float32Array(dims.B * dims.Cout * pOutN * nb);
  const acc = new Float64Array(nb);
  for (let b = 0; b < dims.B; b++) {
    for (let co = 0; co < dims.Cout; co++) {
      for (let o = 0; o < pOutN; o++) {
        for (let t = 0; t < nb; t++) acc[t] = bias[t * dims.Cout + co];
        for (let ci = 0; ci < dims.Cin; ci++) {
          for (let f = 0; f < q; f++) {
            const xBase = ((b * dims.Cin + ci) * pIn + inIndex[o * q + f]) * nb;
            for (let i = 0; i < nb; i++) {
              const fv = filters[((i * dims.Cin + ci) * dims.Cout + co) * q + f];
              if (fv === 0) continue;
              for (let j = 0; j < nb; j++) {
                const c = table.coeff[i * nb + j];
                if (c !== 0) acc[table.target[i * nb + j]] += c * fv * x[xBase + j];
              }
            }
          }
        }
        const oBase = ((b * dims.Cout + co) * pOutN + o) * nb;
        for (let t = 0; t < nb; t++) out[oBase + t] = Math.fround(acc[t]);
      }
    }
  }
  return out;
}

export function linearForward(
  x: Float32Array,
  weight: Float32Array,
  bias: Float32Array,
  B: number,
  Cin: number,
  Cout: number,
  g: number[],
): Float32Array {
  const table = productTable(g);
  const nb = table.nBlades;
  if (x.length !== B * Cin * nb) throw new Error("linear input size mismatch");
  if (weight.length !== nb * Cout * Cin) throw new Error("linear weight size mismatch");
  const out = new Float32Array(B * Cout * nb);
  const acc = new Float64Array(nb);
  for (let b = 0; b < B; b++) {
    for (let co = 0; co < Cout; co++) {
      for (let t = 0; t < nb; t++) acc[t] = bias[t * Cout + co];
      for (let ci = 0; ci < Cin; ci++) {
        const xBase = (b * Cin + ci) * nb;
        for (let i = 0; i < nb; i++) {
          const wv = weight[(i * Cout + co) * Cin + ci];
          if (wv === 0) continue;
          for (let j = 0; j < nb; j++) {
            const c = table.coeff[i * nb + j];
            if (c !== 0) acc[table.target[i * nb + j]] += c * wv * x[xBase + j];
          }
        }
      }
      for (let t = 0; t < nb; t++) out[(b * Cout + co) * nb + t] = Math.fround(acc[t]);
    }
  }
  return out;
}

export type AggMode = "linear" | "sum" | "mean";
export const AGG_MODE_CODE: Record<AggMode, number> = { linear: 0, sum: 1, mean: 2 };

export interface ActivationSpec {
  mode: AggMode;
  kernelIndices: number[];
  weight?: Float32Array; // (C, K), linear mode only
  bias?: Float32Array; // (C,), linear mode only
}

function sigmoid(s: number): number {
  return 1 / (1 + Math.exp(-s));
}

/**
 * Gated multivector activation over (B, C, P, N_B); pass P = 1 for the
 * flat (B, C, N_B) form. The gate is computed per (b, c, p).
 */
export function activationForward(
  x: Float32Array,
  B: number,
  C: number,
  P: number,
  nb: number,
  spec: ActivationSpec,
): Float32Array {
  if (x.length !== B * C * P * nb) throw new Error("activation input size mismatch");
  const K = spec.kernelIndices.length;
  if (spec.mode === "linear" && (!spec.weight || !spec.bias)) {
    throw new Error("linear mode requires weight and bias");
  }
  const out = new Float32Array(x.length);
  for (let b = 0; b < B; b++) {
    for (let c = 0; c < C; c++) {
      for (let p = 0; p < P; p++) {
        const base = ((b * C + c) * P + p) * nb;
        let s = 0;
        if (spec.mode === "linear") {
          for (let k = 0; k < K; k++) {
            s += x[base + spec.kernelIndices[k]] * spec.weight![c * K + k];
          }
          s += spec.bias![c];
        } else {
          for (let k = 0; k < K; k++) s += x[base + spec.kernelIndices[k]];
          if (spec.mode === "mean") s /= K;
        }
        const gate = sigmoid(Math.fround(s));
        for (let j = 0; j < nb; j++) out[base + j] = Math.fround(x[base + j] * gate);
      }
    }
  }
  return out;
}

export function maxRelError(a: Float32Array | Float64Array, b: Float32Array | Float64Array, floor = 1e-2): number {
  if (a.length !== b.length) throw new Error(`length mismatch ${a.length} vs ${b.length}`);
  let worst = 0;
  for (let i = 0; i < a.length; i++) {
    const err = Math.abs(a[i] - b[i]) / (floor + Math.max(Math.abs(a[i]), Math.abs(b[i])));
    if (err > worst) worst = err;
  }
  return worst;
}
