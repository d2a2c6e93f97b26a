/* tslint:disable */
/* eslint-disable */

/**
 * A simulated stream held in memory.
 */
export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * CUSUM values for every monitored frame, charting past any signal.
     * `theta_sq` is estimated from an independent in-control stream.
     */
    chart(m0: number, kappa: number, q0: number): Float64Array;
    defaultKappa(): number;
    /**
     * Observed intensities of frame `k` (0-based), row-major.
     */
    frame(k: number): Float64Array;
    is_empty(): boolean;
    len(): number;
    n(): number;
    constructor(scenario: string, regime: string, n: number, sigma: number, horizon: number, seed: number);
    /**
     * Fits on the `m0` frames before `k` and leaf-averages frame `k`.
     */
    predict(k: number, m0: number): Prediction;
}

/**
 * Denoised frame, leaf labels and lack of fit for one predicted frame.
 */
export class Prediction {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    denoised: Float64Array;
    labels: Uint32Array;
    leaves: number;
    mse: number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly __wbg_get_prediction_denoised: (a: number) => [number, number];
    readonly __wbg_get_prediction_labels: (a: number) => [number, number];
    readonly __wbg_get_prediction_leaves: (a: number) => number;
    readonly __wbg_get_prediction_mse: (a: number) => number;
    readonly __wbg_prediction_free: (a: number, b: number) => void;
    readonly __wbg_set_prediction_denoised: (a: number, b: number, c: number) => void;
    readonly __wbg_set_prediction_labels: (a: number, b: number, c: number) => void;
    readonly __wbg_set_prediction_leaves: (a: number, b: number) => void;
    readonly __wbg_set_prediction_mse: (a: number, b: number) => void;
    readonly demo_chart: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_defaultKappa: (a: number) => number;
    readonly demo_frame: (a: number, b: number) => [number, number, number, number];
    readonly demo_is_empty: (a: number) => number;
    readonly demo_len: (a: number) => number;
    readonly demo_n: (a: number) => number;
    readonly demo_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
    readonly demo_predict: (a: number, b: number, c: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
