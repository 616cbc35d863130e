/**
 * Command line: `train --config <json> --train <csds> --val <csds>
 * --out <weights>` fits the network and saves best-validation weights;
 * `eval --weights <file> --test-dir <dir> --out <csv>` scores every
 * dataset in the directory and writes curve rows.
 */

import * as fs from "fs";
import * as path from "path";

import * as tf from "@tensorflow/tfjs";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { formatCurveCsv } from "./curves";
import { effectiveCorrelationLength, readCovariance, readDataset } from "./dataset";
import { evaluateMany, sirLabel } from "./evaluate";
import { buildUnet, DEFAULT_CONFIG, parameterCount, UNetConfig } from "./model";
import { trainModel } from "./train";
import { loadModel, saveModel } from "./weights";

function loadConfig(configPath: string): UNetConfig {
  const user = JSON.parse(fs.readFileSync(configPath, "utf-8"));
  const cfg = { ...DEFAULT_CONFIG, ...user };
  for (const key of Object.keys(user)) {
    if (!(key in DEFAULT_CONFIG)) {
      throw new Error(`unknown config field ${JSON.stringify(key)}`);
    }
  }
  return cfg;
}

async function runTrain(args: {
  config: string;
  train: string;
  val: string;
  out: string;
  covSource?: string;
  covInterference?: string;
}): Promise<void> {
  const cfg = loadConfig(args.config);
  if (args.covSource || args.covInterference) {
    // kernel spans the wider correlation length of the two components
    let lag = 0;
    for (const p of [args.covSource, args.covInterference]) {
      if (p) lag = Math.max(lag, effectiveCorrelationLength(readCovariance(p)));
    }
    cfg.firstKernel = 2 * lag + 1;
  }
  const train = readDataset(args.train);
  const val = readDataset(args.val);
  const model = buildUnet(cfg);
  console.error(
    `network: ${parameterCount(model)} parameters, first kernel ${cfg.firstKernel}, ` +
      `depth ${cfg.depth}, width ${cfg.baseWidth}`,
  );
  const report = await trainModel(model, cfg, train, val, (m) => console.error(m));
  await saveModel(model, args.out);
  console.log(
    JSON.stringify({
      written: args.out,
      bestValLoss: report.bestValLoss,
      epochsRun: report.epochsRun,
      stoppedEarly: report.stoppedEarly,
    }),
  );
}

async function runEval(args: { weights: string; testDir: string; out: string }): Promise<void> {
  const model = await loadModel(args.weights);
  const files = fs
    .readdirSync(args.testDir)
    .filter((f) => f.endsWith(".csds"))
    .sort()
    .map((f) => path.join(args.testDir, f));
  if (files.length === 0) {
    throw new Error(`no .csds files in ${args.testDir}`);
  }
  const labeled = files.map((f) => {
    const ds = readDataset(f);
    return { ds, sirDb: sirLabel(ds) };
  });
  const rows = evaluateMany(model, labeled);
  fs.writeFileSync(args.out, formatCurveCsv(rows));
  console.log(JSON.stringify({ written: args.out, rows: rows.length }));
}

export async function main(argv: string[]): Promise<number> {
  tf.setBackend("cpu");
  try {
    await yargs(argv)
      .command(
        "train",
        "fit the separator on exported datasets",
        (y) =>
          y
            .option("config", { type: "string", demandOption: true })
            .option("train", { type: "string", demandOption: true })
            .option("val", { type: "string", demandOption: true })
            .option("out", { type: "string", demandOption: true })
            .option("cov-source", { type: "string" })
            .option("cov-interference", { type: "string" }),
        async (a) =>
          runTrain({
            config: a.config,
            train: a.train,
            val: a.val,
            out: a.out,
            covSource: a["cov-source"],
            covInterference: a["cov-interference"],
          }),
      )
      .command(
        "eval",
        "score saved weights against per-level test exports",
        (y) =>
          y
            .option("weights", { type: "string", demandOption: true })
            .option("test-dir", { type: "string", demandOption: true })
            .option("out", { type: "string", demandOption: true }),
        async (a) => runEval({ weights: a.weights, testDir: a["test-dir"], out: a.out }),
      )
      .demandCommand(1)
      .strict()
      .fail((msg, err) => {
        throw err ?? new Error(msg);
      })
      .parseAsync();
    return 0;
  } catch (err) {
    console.error(JSON.stringify({ error: (err as Error).message }));
    return 1;
  }
}

if (require.main === module) {
  main(hideBin(process.argv)).then((code) => {
    process.exitCode = code;
  });
}
