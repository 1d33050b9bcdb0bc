/* tslint:disable */
/* eslint-disable */

/**
 * β-traces and alarms of one detection run.
 */
export class Detection {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * First combined alarm frame, or -1.
     */
    alarm(): number;
    /**
     * Wavenumber labels separated by `;`.
     */
    labels(): string;
    n_frames(): number;
    /**
     * First alarm frame per trace, or -1.
     */
    trace_alarms(): Int32Array;
    /**
     * Trace values, one block of `n_frames` per label.
     */
    values(): Float64Array;
}

/**
 * A simulated scenario held on the Rust side.
 */
export class Simulation {
    free(): void;
    [Symbol.dispose](): void;
    change_frame(): number;
    /**
     * Runs the filter with the `"proposed"` or `"baseline"` model.
     */
    detect(model: string): Detection;
    /**
     * Row-major field values of frame `k`.
     */
    frame(k: number): Float64Array;
    n_frames(): number;
    constructor(n: number, seed: bigint, advection: number);
    side(): number;
}

export function spectrum_heatmap(mu1: number, mu2: number, sigma: number, eta: number, phi: number, v: number, kmax: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_detection_free: (a: number, b: number) => void;
    readonly __wbg_simulation_free: (a: number, b: number) => void;
    readonly detection_alarm: (a: number) => number;
    readonly detection_labels: (a: number) => [number, number];
    readonly detection_n_frames: (a: number) => number;
    readonly detection_trace_alarms: (a: number) => [number, number];
    readonly detection_values: (a: number) => [number, number];
    readonly simulation_change_frame: (a: number) => number;
    readonly simulation_detect: (a: number, b: number, c: number) => [number, number, number];
    readonly simulation_frame: (a: number, b: number) => [number, number, number, number];
    readonly simulation_n_frames: (a: number) => number;
    readonly simulation_new: (a: number, b: bigint, c: number) => [number, number, number];
    readonly simulation_side: (a: number) => number;
    readonly spectrum_heatmap: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
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
