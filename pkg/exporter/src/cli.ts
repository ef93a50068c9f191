/** Exporter CLI.
 *
 *   node dist/cli.js export --images <listing-file | paths...> --out DIR
 *     [--prompt TEXT] [--captioner ID] [--encoder ID] [--backbone ID]
 *     [--n-vertices N] [--width 32|64] [--policy zeros|absent-with-flag]
 *     [--batch-size N]
 *
 * Exit codes: 0 success, 1 runtime failure, 2 usage error.
 */

import { readFileSync } from "node:fs";

import { defaultJob, runExport, VoxelPolicy } from "./export.js";

function usage(): void {
  console.error(
    "usage: cli.js export --images LISTING --out DIR [--prompt TEXT] " +
      "[--captioner ID] [--encoder ID] [--backbone ID] [--n-vertices N] " +
      "[--width 32|64] [--policy zeros|absent-with-flag] [--batch-size N]",
  );
}

export function main(argv: string[]): number {
  if (argv.length === 0 || argv[0] !== "export") {
    usage();
    return 2;
  }
  const args = argv.slice(1);
  const opts = new Map<string, string>();
  const positional: string[] = [];
  for (let i = 0; i < args.length; i++) {
    const a = args[i];
    if (a.startsWith("--")) {
      const key = a.slice(2);
      if (i + 1 >= args.length) {
        console.error(`missing value for --${key}`);
        usage();
        return 2;
      }
      opts.set(key, args[++i]);
    } else {
      positional.push(a);
    }
  }
  const known = new Set([
    "images", "out", "prompt", "captioner", "encoder", "backbone",
    "n-vertices", "width", "policy", "batch-size",
  ]);
  for (const key of opts.keys()) {
    if (!known.has(key)) {
      console.error(`unknown flag --${key}`);
      usage();
      return 2;
    }
  }
  const out = opts.get("out");
  if (!out) {
    console.error("--out is required");
    usage();
    return 2;
  }
  let imagePaths = positional;
  const listing = opts.get("images");
  if (listing) {
    try {
      imagePaths = imagePaths.concat(
        readFileSync(listing, "utf-8").split("\n").map((l) => l.trim()).filter((l) => l.length > 0),
      );
    } catch (e) {
      console.error(`cannot read image listing: ${(e as Error).message}`);
      return 1;
    }
  }
  if (imagePaths.length === 0) {
    console.error("no images given (use --images LISTING or positional paths)");
    usage();
    return 2;
  }
  const width = opts.has("width") ? Number(opts.get("width")) : 32;
  if (width !== 32 && width !== 64) {
    console.error("--width must be 32 or 64");
    usage();
    return 2;
  }
  const policy = (opts.get("policy") ?? "zeros") as VoxelPolicy;
  if (policy !== "zeros" && policy !== "absent-with-flag") {
    console.error("--policy must be zeros or absent-with-flag");
    usage();
    return 2;
  }

  const job = defaultJob(imagePaths, out);
  if (opts.has("prompt")) job.prompt = opts.get("prompt")!;
  if (opts.has("captioner")) job.captionerId = opts.get("captioner")!;
  if (opts.has("encoder")) job.textEncoderId = opts.get("encoder")!;
  if (opts.has("backbone")) job.visionBackboneId = opts.get("backbone")!;
  if (opts.has("n-vertices")) job.nVertices = Number(opts.get("n-vertices"));
  if (opts.has("batch-size")) job.batchSize = Number(opts.get("batch-size"));
  job.valueWidth = width as 32 | 64;
  job.voxelPolicy = policy;

  try {
    const result = runExport(job);
    for (const err of result.errors) {
      console.error(`skipped ${err.imageId}: ${err.message}`);
    }
    console.log(
      `exported ${result.nExported} images to ${out} ` +
        `(${result.errors.length} skipped); captions in captions.txt`,
    );
    return 0;
  } catch (e) {
    console.error(`error: ${(e as Error).message}`);
    return 1;
  }
}

const isMain = process.argv[1] && import.meta.url.endsWith(
  process.argv[1].split("/").pop() ?? "",
);
if (isMain) {
  process.exit(main(process.argv.slice(2)));
}
