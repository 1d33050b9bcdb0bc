/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_detection_free: (a: number, b: number) => void;
export const __wbg_simulation_free: (a: number, b: number) => void;
export const detection_alarm: (a: number) => number;
export const detection_labels: (a: number) => [number, number];
export const detection_n_frames: (a: number) => number;
export const detection_trace_alarms: (a: number) => [number, number];
export const detection_values: (a: number) => [number, number];
export const simulation_change_frame: (a: number) => number;
export const simulation_detect: (a: number, b: number, c: number) => [number, number, number];
export const simulation_frame: (a: number, b: number) => [number, number, number, number];
export const simulation_n_frames: (a: number) => number;
export const simulation_new: (a: number, b: bigint, c: number) => [number, number, number];
export const simulation_side: (a: number) => number;
export const spectrum_heatmap: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
