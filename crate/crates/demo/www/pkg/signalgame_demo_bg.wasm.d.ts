/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_trainingsession_free: (a: number, b: number) => void;
export const analyze_language: (a: number, b: number, c: number) => [number, number, number, number];
export const message_map: (a: number, b: number, c: number) => [number, number, number, number];
export const trainingsession_linear_params: (a: number) => [number, number];
export const trainingsession_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number];
export const trainingsession_step: (a: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
