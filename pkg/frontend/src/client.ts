/**
 * Client for the kernel library's JSON-lines layer server.
 *
 * One server process is spawned per client; layers are created once
 * (shapes validated eagerly on the server) and the returned handles stay
 * valid until closed. Tensors cross the boundary through the binary
 * tensor file format in a per-client scratch directory; inside the
 * process, Float32Array payloads are written and read without conversion.
 * Server-side errors surface as thrown Errors carrying the server text.
 */

import { ChildProcessWithoutNullStreams, spawn } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { createInterface, Interface } from "node:readline";

import { LayoutTag, Tensor, readTensor, writeTensor } from "./tensorfile.js";
import { AGG_MODE_CODE, AggMode, ConvDims } from "./reference.js";

interface Response {
  ok: boolean;
  error?: string;
  handle?: number;
  elapsed_s?: number;
  shape?: number[];
  protocol?: number;

}

export interface ForwardResult {
  tensor: Tensor;
  /** kernel-only time reported by the server, excluding file I/O */
  elapsedS: number;
}

export class KernelClient {
  private proc: ChildProcessWithoutNullStreams;
  private lines: Interface;
  private pending: Array<{ resolve: (r: Response) => void; reject: (e: Error) => void }> = [];
  private seq = 0;
  readonly workdir: string;

  private constructor(proc: ChildProcessWithoutNullStreams, workdir: string) {
    this.proc = proc;
    this.workdir = workdir;
    this.lines = createInterface({ input: proc.stdout });
    this.lines.on("line", (line) => {
      const waiter = this.pending.shift();
      if (waiter) {
        try {
          waiter.resolve(JSON.parse(line) as Response);
        } catch (e) {
          waiter.reject(new Error(`unparseable server response: ${line}`));
        }
      }
    });
    proc.on("exit", () => {
      for (const waiter of this.pending.splice(0)) {
        waiter.reject(new Error("kernel server exited"));
      }
    });
  }

  static async start(python = process.env.MVKERNELS_PYTHON ?? "python3"): Promise<KernelClient> {
    const workdir = mkdtempSync(join(tmpdir(), "mvkernels-"));
    const proc = spawn(python, ["-m", "mvkernels", "serve"], {
      stdio: ["pipe", "pipe", "pipe"],
    });
    let stderr = "";
    proc.stderr.on("data", (chunk) => (stderr += chunk));
    const client = new KernelClient(proc, workdir);
    const pong = await client.request({ op: "ping" }).catch((e) => {
      throw new Error(`kernel server failed to start: ${e}\n${stderr}`);
    });
    if (!pong.ok) throw new Error(`kernel server ping failed: ${pong.error}`);
    return client;
  }

  private request(payload: Record<string, unknown>): Promise<Response> {
    return new Promise((resolve, reject) => {
      this.pending.push({ resolve, reject });
      this.proc.stdin.write(JSON.stringify(payload) + "\n");
    });
  }

  private async checked(payload: Record<string, unknown>): Promise<Response> {
    const resp = await this.request(payload);
    if (!resp.ok) throw new Error(resp.error ?? "kernel server error");
    return resp;
  }

  private scratch(name: string): string {
    return join(this.workdir, `${this.seq++}-${name}.mvtf`);
  }

  async createConv(
    dims: ConvDims,
    g: number[],
    filters: Float32Array,
    bias: Float32Array,
    opts: { W?: number; U?: number } = {},
  ): Promise<BoundLayer> {
    const nb = 1 << g.length;
    const q = Math.pow(dims.dFilter, dims.k);
    const fPath = this.scratch("filters");
    const bPath = this.scratch("bias");
    writeTensor(fPath, {
      data: filters,
      shape: [nb, dims.Cin, dims.Cout, q],
      tag: LayoutTag.ConvFilters,
      k: dims.k,
    });
    writeTensor(bPath, { data: bias, shape: [nb, dims.Cout], tag: LayoutTag.ConvBias, k: dims.k });
    const resp = await this.checked({
      op: "create_conv",
      sig: g,
      B: dims.B,
      Cin: dims.Cin,
      Cout: dims.Cout,
      dimage: dims.dImage,
      dfilter: dims.dFilter,
      filters: fPath,
      bias: bPath,
      ...(opts.W !== undefined ? { W: opts.W } : {}),
      ...(opts.U !== undefined ? { U: opts.U } : {}),
    });
    return new BoundLayer(this, resp.handle!, g.length);
  }

  async createLinear(
    g: number[],
    Cin: number,
    Cout: number,
    weight: Float32Array,
    bias: Float32Array,
  ): Promise<BoundLayer> {
    const nb = 1 << g.length;
    const wPath = this.scratch("weight");
    const bPath = this.scratch("lbias");
    writeTensor(wPath, { data: weight, shape: [nb, Cout, Cin], tag: LayoutTag.LinearWeight, k: g.length });
    writeTensor(bPath, { data: bias, shape: [nb, Cout], tag: LayoutTag.LinearBias, k: g.length });
    const resp = await this.checked({
      op: "create_linear",
      sig: g,
      weight: wPath,
      bias: bPath,
    });
    return new BoundLayer(this, resp.handle!, g.length);
  }

  async createActivation(
    g: number[],
    mode: AggMode,
    kernelIndices: number[],
    weight?: { data: Float32Array; C: number },
    bias?: Float32Array,
  ): Promise<BoundLayer> {
    const payload: Record<string, unknown> = {
      op: "create_activation",
      sig: g,
      mode: AGG_MODE_CODE[mode],
      kernel_indices: kernelIndices,
    };
    if (weight) {
      const wPath = this.scratch("aweight");
      writeTensor(wPath, {
        data: weight.data,
        shape: [weight.C, kernelIndices.length],
        tag: LayoutTag.Generic,
        k: g.length,
      });
      payload.weight = wPath;
    }
    if (bias) {
      const bPath = this.scratch("abias");
      writeTensor(bPath, { data: bias, shape: [bias.length], tag: LayoutTag.Generic, k: g.length });
      payload.bias = bPath;
    }
    const resp = await this.checked(payload);
    return new BoundLayer(this, resp.handle!, g.length);
  }

  async forwardHandle(handle: number, input: Tensor, variant?: string): Promise<ForwardResult> {
    const inPath = this.scratch("in");
    const outPath = this.scratch("out");
    writeTensor(inPath, input);
    return this.forwardFiles(handle, inPath, outPath, variant);
  }

  /** Forward from an already-written tensor file (used by dtype tests). */
  async forwardFiles(handle: number, inPath: string, outPath: string, variant?: string): Promise<ForwardResult> {
    const resp = await this.checked({
      op: "forward",
      handle,
      input: inPath,
      output: outPath,
      ...(variant ? { variant } : {}),
    });
    return { tensor: readTensor(outPath), elapsedS: resp.elapsed_s ?? 0 };
  }

  async closeHandle(handle: number): Promise<void> {
    await this.checked({ op: "close", handle });
  }

  async shutdown(): Promise<void> {
    try {
      await this.request({ op: "exit" });
    } catch {
      // server may already be gone
    }
    this.proc.stdin.end();
    this.proc.kill();
    rmSync(this.workdir, { recursive: true, force: true });
  }
}

/** A constructed layer on the server; valid until closed. */
export class BoundLayer {
  constructor(
    private client: KernelClient,
    readonly handle: number,
    readonly k: number,
  ) {}

  forward(input: Tensor, variant?: string): Promise<ForwardResult> {
    return this.client.forwardHandle(this.handle, input, variant);
  }

  close(): Promise<void> {
    return this.client.closeHandle(this.handle);
  }
}
