/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const __wbg_get_prediction_denoised: (a: number) => [number, number];
export const __wbg_get_prediction_labels: (a: number) => [number, number];
export const __wbg_get_prediction_leaves: (a: number) => number;
export const __wbg_get_prediction_mse: (a: number) => number;
export const __wbg_prediction_free: (a: number, b: number) => void;
export const __wbg_set_prediction_denoised: (a: number, b: number, c: number) => void;
export const __wbg_set_prediction_labels: (a: number, b: number, c: number) => void;
export const __wbg_set_prediction_leaves: (a: number, b: number) => void;
export const __wbg_set_prediction_mse: (a: number, b: number) => void;
export const demo_chart: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demo_defaultKappa: (a: number) => number;
export const demo_frame: (a: number, b: number) => [number, number, number, number];
export const demo_is_empty: (a: number) => number;
export const demo_len: (a: number) => number;
export const demo_n: (a: number) => number;
export const demo_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
export const demo_predict: (a: number, b: number, c: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
