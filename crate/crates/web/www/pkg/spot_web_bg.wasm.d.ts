/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_gridview_free: (a: number, b: number) => void;
export const __wbg_trainreport_free: (a: number, b: number) => void;
export const default_discount: () => number;
export const grid_cells: () => [number, number];
export const gridview_distances: (a: number) => [number, number];
export const gridview_height: (a: number) => number;
export const gridview_ideal_actions: (a: number) => number;
export const gridview_new: (a: number) => number;
export const gridview_text: (a: number) => [number, number];
export const gridview_width: (a: number) => number;
export const train_grid: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const trainreport_completion_rate: (a: number) => number;
export const trainreport_convergence: (a: number) => number;
export const trainreport_frames: (a: number) => [number, number];
export const trainreport_mean_efficiency: (a: number) => number;
export const trainreport_training_trials: (a: number) => number;
export const trial_rewards: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_drop_slice: (a: number, b: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
