/**
 * Minimal Clifford algebra support for the host-side reference: blade
 * product table from the two generator relations (squares give the metric,
 * distinct generators anticommute). Blades are indexed by bitmask over the
 * generators, stored in ascending-mask order, matching the kernel library.
 */

export interface BladeTable {
  k: number;
  nBlades: number;
  /** target[i * nBlades + j] = blade mask of e_I e_J (always i ^ j) */
  target: Int32Array;
  /** coeff[i * nBlades + j] in {-1, 0, +1} */
  coeff: Int32Array;
}

function reorderSign(iMask: number, jMask: number): number {
  let a = iMask >> 1;
  let swaps = 0;
  while (a !== 0) {
    let shared = a & jMask;
    while (shared !== 0) {
      swaps += shared & 1;
      shared >>= 1;
    }
    a >>= 1;
  }
  return swaps % 2 === 0 ? 1 : -1;
}

export function bladeProduct(iMask: number, jMask: number, g: number[]): [number, number] {
  let coeff = reorderSign(iMask, jMask);
  const shared = iMask & jMask;
  for (let bit = 0; bit < g.length; bit++) {
    if ((shared >> bit) & 1) coeff *= g[bit];
  }
  return [iMask ^ jMask, coeff];
}

export function productTable(g: number[]): BladeTable {
  if (g.length === 0 || g.every((v) => v === 0)) {
    throw new Error(`invalid signature ${JSON.stringify(g)}`);
  }
  for (const v of g) {
    if (v !== -1 && v !== 0 && v !== 1) throw new Error(`metric value ${v} not in {-1,0,1}`);
  }
  const k = g.length;
  const nBlades = 1 << k;
  const target = new Int32Array(nBlades * nBlades);
  const coeff = new Int32Array(nBlades * nBlades);
  for (let i = 0; i < nBlades; i++) {
    for (let j = 0; j < nBlades; j++) {
      const [t, c] = bladeProduct(i, j, g);
      target[i * nBlades + j] = t;
      coeff[i * nBlades + j] = c;
    }
  }
  return { k, nBlades, target, coeff };
}
