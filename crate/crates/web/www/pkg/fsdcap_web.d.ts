/* tslint:disable */
/* eslint-disable */

/**
 * Fractional reweighting of one row of positive weights.
 */
export function fractional_weights(row: Float64Array, gamma: number): Float64Array;

/**
 * Nodes reached by each diffusion layer: entry `m` counts nodes within `m`
 * hops of the observed rows of a structural mask on the default block
 * model. The last entry counts unreachable nodes.
 */
export function layer_coverage(seed: bigint, mr: number): Uint32Array;

/**
 * Masks the default block model, imputes with FP, FSD and FSD-CAP, and
 * returns metrics plus class-mean heatmaps as JSON.
 */
export function sbm_demo(seed: bigint, mr: number, gamma: number, lambda: number, temperature: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly fractional_weights: (a: number, b: number, c: number) => [number, number, number, number];
    readonly layer_coverage: (a: bigint, b: number) => [number, number, number, number];
    readonly sbm_demo: (a: bigint, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
