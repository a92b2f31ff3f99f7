/* tslint:disable */
/* eslint-disable */

export class TrainingSession {
    free(): void;
    [Symbol.dispose](): void;
    linear_params(): string | undefined;
    constructor(language: string, task: string, cell: string, n_values: number, hidden: number, seed: number);
    /**
     * Metrics of the next epoch as JSON, or `null` once training diverged.
     */
    step(): string | undefined;
}

export function analyze_language(language: string, n_values: number): string;

export function message_map(language: string, n_values: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_trainingsession_free: (a: number, b: number) => void;
    readonly analyze_language: (a: number, b: number, c: number) => [number, number, number, number];
    readonly message_map: (a: number, b: number, c: number) => [number, number, number, number];
    readonly trainingsession_linear_params: (a: number) => [number, number];
    readonly trainingsession_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number];
    readonly trainingsession_step: (a: number) => [number, number, number, number];
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
