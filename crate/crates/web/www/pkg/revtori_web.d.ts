/* tslint:disable */
/* eslint-disable */

/**
 * Spectrum of a random matrix anti-commuting with `diag(I_P, -I_Q)`.
 */
export function anticommuting_spectrum(p_mult: number, q_mult: number, seed: bigint): string;

/**
 * Best gamma and the closest resonances for one set of frequencies.
 */
export function diophantine_scan(omega: Float64Array, forcing: Float64Array, beta0: Float64Array, tau: number, order_bound: number): string;

/**
 * Solves the generated reference system `(n, m, p, N) = (1, 1, 2, 1)` at
 * one eps with `modes` Fourier modes per angle.
 */
export function solve_reference(seed: bigint, eps: number, modes: number, frozen: boolean): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly anticommuting_spectrum: (a: number, b: number, c: bigint) => [number, number, number, number];
    readonly diophantine_scan: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly solve_reference: (a: bigint, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
