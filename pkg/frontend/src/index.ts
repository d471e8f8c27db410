export * from "./tensorfile.js";
export * from "./algebra.js";
export * from "./reference.js";
export * from "./client.js";
export * from "./block.js";
export * from "./rng.js";
