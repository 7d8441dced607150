/* tslint:disable */
/* eslint-disable */

/**
 * Asymmetry A(f) over `fs`. `loss` is "pdl", "sel", "ael", "arl" or "qtl";
 * `param` is λ for "pdl" and the quantile level for "qtl".
 */
export function asymmetry_curve(loss: string, param: number, fs: Float64Array): Float64Array;

/**
 * Conditional intervals for a log-normal predictive law LN(μ, v), one per λ.
 * Returns `[predictor, lower, upper]` triples.
 */
export function intervals_by_lambda(mu: number, v: number, alpha: number, m: number, seed: bigint, lambdas: Float64Array): Float64Array;

/**
 * L_λ(δ, y) over `ys`.
 */
export function loss_curve(lambda: number, delta: number, ys: Float64Array): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly asymmetry_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly intervals_by_lambda: (a: number, b: number, c: number, d: number, e: bigint, f: number, g: number) => [number, number, number, number];
    readonly loss_curve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
