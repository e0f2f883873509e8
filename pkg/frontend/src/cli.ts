#!/usr/bin/env node
/**
 * Extractor frontend commands:
 *   make-corpus  write a random tokenized corpus (toy data)
 *   init-model   save a randomly initialized model
 *   train-toy    overfit a model to copy a corpus's continuations verbatim
 *   extract      greedy-decode a corpus and emit .mtok / .mrec files
 */

import {writeCorpus} from './binary.js';
import {extract} from './extract.js';
import {NextTokenModel, trainToCopy} from './model.js';
import {randomCorpus} from './rng.js';

function parseArgs(argv: string[]): Map<string, string> {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith('--')) {
      throw new UsageError(`unexpected argument ${arg}`);
    }
    const key = arg.slice(2);
    const value = argv[i + 1];
    if (value === undefined || value.startsWith('--')) {
      throw new UsageError(`missing value for --${key}`);
    }
    args.set(key, value);
    i++;
  }
  return args;
}

class UsageError extends Error {}

function need(args: Map<string, string>, key: string): string {
  const value = args.get(key);
  if (value === undefined) throw new UsageError(`missing required --${key}`);
  return value;
}

function intArg(args: Map<string, string>, key: string,
                fallback?: number): number {
  const raw = args.get(key);
  if (raw === undefined) {
    if (fallback === undefined) throw new UsageError(`missing required --${key}`);
    return fallback;
  }
  const value = Number(raw);
  if (!Number.isInteger(value)) throw new UsageError(`--${key} must be an integer`);
  return value;
}

function cmdMakeCorpus(args: Map<string, string>): number {
  const out = need(args, 'out');
  const sequences = intArg(args, 'sequences', 100);
  const length = intArg(args, 'length', 24);
  const vocab = intArg(args, 'vocab', 48);
  const corpus = randomCorpus(intArg(args, 'seed', 1), sequences, length, vocab);
  writeCorpus(out, corpus);
  console.log(`wrote ${out}: ${sequences} sequences of ${length} tokens, ` +
              `vocab ${vocab}`);
  return 0;
}

function cmdInitModel(args: Map<string, string>): number {
  const out = need(args, 'out');
  const model = new NextTokenModel({
    vocab: intArg(args, 'vocab', 48),
    contextLen: intArg(args, 'context-len', 8),
    dEmbed: intArg(args, 'embed', 24),
    dHidden: intArg(args, 'hidden', 192),
  }, intArg(args, 'seed', 0));
  model.save(out);
  console.log(`wrote ${out}: ${model.paramCount()} parameters, ` +
              `randomly initialized`);
  return 0;
}

async function cmdTrainToy(args: Map<string, string>): Promise<number> {
  const {readCorpus} = await import('./binary.js');
  const corpus = readCorpus(need(args, 'corpus'));
  const out = need(args, 'out');
  const promptLen = intArg(args, 'prompt-len', 8);
  const contLen = intArg(args, 'cont-len', 16);
  const vocab = intArg(args, 'vocab', 48);
  const model = new NextTokenModel({
    vocab,
    contextLen: intArg(args, 'context-len', promptLen),
    dEmbed: intArg(args, 'embed', 24),
    dHidden: intArg(args, 'hidden', 192),
  }, intArg(args, 'seed', 0));
  const result = await trainToCopy(model, corpus, promptLen, contLen, {
    maxEpochs: intArg(args, 'max-epochs', 600),
    batchSize: intArg(args, 'batch-size', 128),
    seed: intArg(args, 'seed', 0) + 1,
    verbose: args.get('quiet') !== 'true',
  });
  model.save(out);
  console.log(`wrote ${out}: accuracy ${result.accuracy} after ` +
              `${result.epochs} epochs`);
  if (result.accuracy < 1.0) {
    console.error('model did not reach verbatim copy accuracy 1.0');
    return 1;
  }
  return 0;
}

async function cmdExtract(args: Map<string, string>): Promise<number> {
  const result = await extract({
    modelPath: need(args, 'model'),
    corpusPath: need(args, 'corpus'),
    promptLen: intArg(args, 'prompt-len', 8),
    maxContLen: intArg(args, 'cont-len', 16),
    batchSize: intArg(args, 'batch-size', 32),
    device: args.get('device'),
    modelName: need(args, 'model-name'),
    checkpointLabel: need(args, 'checkpoint'),
    tokenOut: need(args, 'tokens-out'),
    recordOut: need(args, 'records-out'),
  });
  console.log(`extracted ${result.records} records ` +
              `(${result.skipped.length} skipped)`);
  return 0;
}

const COMMANDS: Record<string, (args: Map<string, string>) =>
    number | Promise<number>> = {
  'make-corpus': cmdMakeCorpus,
  'init-model': cmdInitModel,
  'train-toy': cmdTrainToy,
  'extract': cmdExtract,
};

const USAGE = `usage: extractor <command> [--flag value ...]

commands:
  make-corpus  --out PATH [--sequences N] [--length N] [--vocab N] [--seed N]
  init-model   --out PATH [--vocab N] [--context-len N] [--embed N]
               [--hidden N] [--seed N]
  train-toy    --corpus PATH --out PATH [--prompt-len N] [--cont-len N]
               [--vocab N] [--context-len N] [--max-epochs N] [--seed N]
  extract      --model PATH --corpus PATH --model-name NAME --checkpoint LABEL
               --tokens-out PATH --records-out PATH [--prompt-len N]
               [--cont-len N] [--batch-size N] [--device BACKEND]
`;

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2);
  const handler = command && COMMANDS[command];
  if (!handler) {
    process.stderr.write(USAGE);
    return 2;
  }
  try {
    return await handler(parseArgs(rest));
  } catch (err) {
    if (err instanceof UsageError) {
      process.stderr.write(`error: ${err.message}\n${USAGE}`);
      return 2;
    }
    process.stderr.write(`error: ${err instanceof Error ? err.message : err}\n`);
    return 1;
  }
}

main().then(code => process.exit(code));
