/**
 * Bindings for the coordkit coordination recognizer.
 *
 * Every call shells out to the coordkit CLI's JSONL batch interface, so the
 * results are field-for-field identical to running the CLI directly. The
 * model handle is opaque and immutable; training is not exposed here.
 */

import { spawnSync } from "node:child_process";
import { existsSync, mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

export class CoordkitError extends Error {}
/** Malformed or inconsistent input data (CLI exit code 1). */
export class CoordkitDataError extends CoordkitError {}
/** Bad invocation: missing paths, contradictory flags (CLI exit code 2). */
export class CoordkitUsageError extends CoordkitError {}
/** Internal failure in the recognizer (CLI exit code 3). */
export class CoordkitInternalError extends CoordkitError {}

export interface TokenSpan {
  start: number;
  end: number;
}

export interface CoordinatorSpan {
  start: number;
  end: number;
  kind: "contiguous" | "paired_left" | "paired_right" | "respectively";
  partner?: TokenSpan;
}

export interface Coordination {
  target: CoordinatorSpan;
  conjuncts: TokenSpan[];
}

export interface RespectivelyLink {
  first: number;
  second: number;
  span: TokenSpan;
}

export interface AnnotatedSentence {
  tokens: string[];
  coordinators: CoordinatorSpan[];
  coordinations: Coordination[];
  respectively_links: RespectivelyLink[];
  failures: string[];
}

export interface SubSentence {
  source_id: number | string;
  tokens: string[];
  path: { coordination_index: number; conjunct_index: number }[];
}

export interface ModelHandle {
  readonly modelDir: string;
  readonly command: readonly string[];
}

const DEFAULT_COMMAND = ["python3", "-m", "coordkit.cli"];

/**
 * Create an immutable handle to a trained model directory.
 *
 * The directory must contain identifier.ckpt and detector.ckpt. The CLI
 * command defaults to `python3 -m coordkit.cli` and can be overridden via
 * the COORDKIT_CMD environment variable or the second argument.
 */
export function load(modelDir: string, command?: string[]): ModelHandle {
  if (!existsSync(modelDir)) {
    throw new CoordkitUsageError(`model directory not found: ${modelDir}`);
  }
  for (const file of ["identifier.ckpt", "detector.ckpt"]) {
    if (!existsSync(join(modelDir, file))) {
      throw new CoordkitUsageError(`missing checkpoint ${file} in ${modelDir}`);
    }
  }
  const cmd =
    command ??
    (process.env.COORDKIT_CMD ? process.env.COORDKIT_CMD.split(/\s+/) : DEFAULT_COMMAND);
  return Object.freeze({ modelDir, command: Object.freeze([...cmd]) });
}

function runCli(handle: ModelHandle, args: string[], what: string): string {
  const [exe, ...prefix] = handle.command;
  const result = spawnSync(exe, [...prefix, ...args], {
    encoding: "utf-8",
    maxBuffer: 256 * 1024 * 1024,
  });
  if (result.error) {
    throw new CoordkitInternalError(`${what}: cannot run CLI: ${result.error.message}`);
  }
  if (result.status !== 0) {
    const message = `${what}: ${result.stderr.trim() || `exit code ${result.status}`}`;
    if (result.status === 1) throw new CoordkitDataError(message);
    if (result.status === 2) throw new CoordkitUsageError(message);
    throw new CoordkitInternalError(message);
  }
  return result.stdout;
}

function withInputFile<T>(lines: string[], fn: (path: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), "coordkit-"));
  const path = join(dir, "input.jsonl");
  try {
    writeFileSync(path, lines.join("\n") + "\n", "utf-8");
    return fn(path);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

type SentenceInput = string | string[];

function inputLine(sentence: SentenceInput): string {
  if (typeof sentence === "string") {
    return canonicalJson({ text: sentence });
  }
  return canonicalJson({ tokens: sentence });
}

function emptyAnnotation(): AnnotatedSentence {
  return {
    tokens: [],
    coordinators: [],
    coordinations: [],
    respectively_links: [],
    failures: [],
  };
}

function isEmpty(sentence: SentenceInput): boolean {
  return typeof sentence === "string" ? sentence.trim() === "" : sentence.length === 0;
}

/** Annotate one sentence (token array, or raw text split on whitespace). */
export function recognize(handle: ModelHandle, sentence: SentenceInput): AnnotatedSentence {
  if (isEmpty(sentence)) {
    return emptyAnnotation();
  }
  return recognizeBatch(handle, [sentence])[0];
}

/** Annotate a batch with a single CLI invocation; order is preserved. */
export function recognizeBatch(
  handle: ModelHandle,
  sentences: SentenceInput[],
): AnnotatedSentence[] {
  if (sentences.length === 0) {
    return [];
  }
  const lines = sentences.map(inputLine);
  const stdout = withInputFile(lines, (path) =>
    runCli(
      handle,
      [
        "predict",
        "--input",
        path,
        "--models",
        handle.modelDir,
        "--output",
        "-",
        "--whitespace-tokenize",
      ],
      "recognize",
    ),
  );
  const rows = stdout.split("\n").filter((line) => line.trim() !== "");
  if (rows.length !== sentences.length) {
    throw new CoordkitInternalError(
      `recognize: expected ${sentences.length} annotations, got ${rows.length}`,
    );
  }
  return rows.map((line) => JSON.parse(line) as AnnotatedSentence);
}

/** Split one sentence into simple sub-sentences (token lists). */
export function split(handle: ModelHandle, sentence: SentenceInput): string[][] {
  if (isEmpty(sentence)) {
    return [];
  }
  return splitDetailed(handle, [sentence]).map((sub) => sub.tokens);
}

/** Split a batch, returning the CLI's sub-sentence objects with provenance. */
export function splitDetailed(
  handle: ModelHandle,
  sentences: SentenceInput[],
): SubSentence[] {
  if (sentences.length === 0) {
    return [];
  }
  const lines = sentences.map(inputLine);
  const stdout = withInputFile(lines, (path) =>
    runCli(
      handle,
      [
        "split",
        "--input",
        path,
        "--models",
        handle.modelDir,
        "--output",
        "-",
        "--whitespace-tokenize",
      ],
      "split",
    ),
  );
  return stdout
    .split("\n")
    .filter((line) => line.trim() !== "")
    .map((line) => JSON.parse(line) as SubSentence);
}

/**
 * Canonical JSON: sorted keys, no whitespace. Matches the primary's
 * serialization byte-for-byte for JSON-representable values.
 */
export function canonicalJson(value: unknown): string {
  if (value === null || typeof value !== "object") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalJson).join(",") + "]";
  }
  const entries = Object.keys(value as Record<string, unknown>)
    .sort()
    .map((key) => `${JSON.stringify(key)}:${canonicalJson((value as Record<string, unknown>)[key])}`);
  return "{" + entries.join(",") + "}";
}
