/* tslint:disable */
/* eslint-disable */

/**
 * A generated grid layout with its distance-to-goal field.
 */
export class GridView {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Row-major steps to the goal, `-1` where unreachable.
     */
    distances(): Int32Array;
    height(): number;
    ideal_actions(): number;
    constructor(seed: number);
    /**
     * Rows of the layout; `#` wall, `L` lava, `G` goal, arrow for the agent.
     */
    text(): string;
    width(): number;
}

/**
 * Outcome of a browser training run.
 */
export class TrainReport {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    completion_rate(): number;
    /**
     * Training actions to full validation completion, `-1` if never.
     */
    convergence(): number;
    /**
     * Layout snapshots of one greedy test trial, rows joined with `/`.
     */
    frames(): string[];
    mean_efficiency(): number;
    training_trials(): number;
}

export function default_discount(): number;

/**
 * Labels of the grid ablation cells, in the order `train_grid` accepts.
 */
export function grid_cells(): string[];

/**
 * Trains a grid cell from `grid_cells()` and evaluates it on `eval_trials`
 * held-out layouts.
 */
export function train_grid(cell: string, seed: number, budget: number, eval_trials: number): TrainReport;

/**
 * Trial rewards for a sequence of instant rewards, discount `gamma`.
 */
export function trial_rewards(instants: Float64Array, completed: boolean, gamma: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_gridview_free: (a: number, b: number) => void;
    readonly __wbg_trainreport_free: (a: number, b: number) => void;
    readonly default_discount: () => number;
    readonly grid_cells: () => [number, number];
    readonly gridview_distances: (a: number) => [number, number];
    readonly gridview_height: (a: number) => number;
    readonly gridview_ideal_actions: (a: number) => number;
    readonly gridview_new: (a: number) => number;
    readonly gridview_text: (a: number) => [number, number];
    readonly gridview_width: (a: number) => number;
    readonly train_grid: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly trainreport_completion_rate: (a: number) => number;
    readonly trainreport_convergence: (a: number) => number;
    readonly trainreport_frames: (a: number) => [number, number];
    readonly trainreport_mean_efficiency: (a: number) => number;
    readonly trainreport_training_trials: (a: number) => number;
    readonly trial_rewards: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_drop_slice: (a: number, b: number) => void;
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
