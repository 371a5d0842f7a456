#!/usr/bin/env node
import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { renderCurves } from "./render.js";

export function main(argv: string[]): number {
  const args = yargs(argv)
    .scriptName("render-curves")
    .option("csv", { type: "string", demandOption: true, describe: "aggregate CSV path" })
    .option("out", { type: "string", demandOption: true, describe: "output SVG path" })
    .option("title", { type: "string", describe: "figure title" })
    .option("linear-x", { type: "boolean", default: false, describe: "linear x axis instead of log" })
    .strict()
    .exitProcess(false)
    .parseSync();
  renderCurves({
    csvPath: args.csv,
    outPath: args.out,
    title: args.title,
    logX: !args["linear-x"],
  });
  return 0;
}

const invokedDirectly = process.argv[1]?.endsWith("cli.js");
if (invokedDirectly) {
  try {
    process.exit(main(hideBin(process.argv)));
  } catch (err) {
    console.error(err instanceof Error ? err.message : String(err));
    process.exit(1);
  }
}
