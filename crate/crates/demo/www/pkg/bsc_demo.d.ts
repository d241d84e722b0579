/* tslint:disable */
/* eslint-disable */

export class FrequencyLimit {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    f_limit: number;
    satisfied: boolean;
    segment_mm: number;
}

/**
 * Largest fringe frequency (periods across the projector) for which every
 * stereo search range holds a single period.
 */
export function frequency_limit(z_min: number, z_max: number, z_nominal: number, baseline_mm: number, projector_z_mm: number, projector_focal_px: number, projector_width_px: number, candidate: number): FrequencyLimit;

/**
 * RGBA pixels (row-major, `width * height * 4` bytes) of the order-K
 * phase error under sinusoidal motion.
 */
export function phase_error_rgba(steps: number, k: number, amplitude: number, period: number, width: number, height: number, scale: number): Uint8Array;

/**
 * Mean absolute 2φ ripple (rad) of the compensated phase for K = 0..=k_max
 * under sinusoidal motion.
 */
export function ripple_vs_k(steps: number, amplitude: number, period: number, k_max: number, sigma: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_frequencylimit_free: (a: number, b: number) => void;
    readonly __wbg_get_frequencylimit_f_limit: (a: number) => number;
    readonly __wbg_get_frequencylimit_satisfied: (a: number) => number;
    readonly __wbg_get_frequencylimit_segment_mm: (a: number) => number;
    readonly __wbg_set_frequencylimit_f_limit: (a: number, b: number) => void;
    readonly __wbg_set_frequencylimit_satisfied: (a: number, b: number) => void;
    readonly __wbg_set_frequencylimit_segment_mm: (a: number, b: number) => void;
    readonly frequency_limit: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
    readonly phase_error_rgba: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly ripple_vs_k: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
