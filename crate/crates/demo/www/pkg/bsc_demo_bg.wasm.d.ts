/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_frequencylimit_free: (a: number, b: number) => void;
export const __wbg_get_frequencylimit_f_limit: (a: number) => number;
export const __wbg_get_frequencylimit_satisfied: (a: number) => number;
export const __wbg_get_frequencylimit_segment_mm: (a: number) => number;
export const __wbg_set_frequencylimit_f_limit: (a: number, b: number) => void;
export const __wbg_set_frequencylimit_satisfied: (a: number, b: number) => void;
export const __wbg_set_frequencylimit_segment_mm: (a: number, b: number) => void;
export const frequency_limit: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
export const phase_error_rgba: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
export const ripple_vs_k: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
