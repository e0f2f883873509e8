/**
 * Run a causal language model over a tokenized corpus: greedy-decode the
 * continuation of each sequence from its prompt and emit the token file and
 * match-record file the analytics package consumes.
 */

import * as tf from '@tensorflow/tfjs';

import {MatchRecord, TokenRecord, readCorpus, writeMatchRecordFile,
        writeTokenFile} from './binary.js';
import {NextTokenModel, argmaxLowest} from './model.js';

export interface ExtractionJob {
  modelPath: string;
  corpusPath: string;
  promptLen: number;    // tokens of prompt conditioning
  maxContLen: number;   // greedy continuation length (mask width)
  batchSize: number;
  device?: string;      // tfjs backend name; default "cpu"
  modelName: string;    // stamped into the record-file header
  checkpointLabel: string;
  tokenOut: string;
  recordOut: string;
  log?: (message: string) => void;
}

export interface ExtractionResult {
  records: number;
  skipped: bigint[];  // sequence ids shorter than promptLen + maxContLen
}

function rethrowIfOom(err: unknown, batchSize: number): never {
  const message = err instanceof Error ? err.message : String(err);
  if (/memory|alloc/i.test(message)) {
    throw new Error(
      `out of memory during batched decoding (batch size ${batchSize}); ` +
      `retry with a smaller --batch-size: ${message}`);
  }
  throw err;
}

/**
 * Greedy decoding is deterministic: same model file, same corpus, same
 * output bytes. Argmax ties resolve to the lowest token id. Prompts are
 * fixed-length (exactly promptLen tokens), so batches need no padding.
 */
export async function extract(job: ExtractionJob): Promise<ExtractionResult> {
  const log = job.log ?? ((m: string) => console.error(m));
  if (job.device) {
    await tf.setBackend(job.device);
  }
  await tf.ready();

  const model = NextTokenModel.load(job.modelPath);
  const {contextLen, vocab} = model.config;
  if (contextLen > job.promptLen) {
    throw new Error(`model context (${contextLen}) exceeds prompt length ` +
                    `(${job.promptLen}); prompts cannot condition it`);
  }

  const sequences = readCorpus(job.corpusPath);
  const need = job.promptLen + job.maxContLen;
  const kept: {seqId: bigint; tokens: Uint32Array}[] = [];
  const skipped: bigint[] = [];
  sequences.forEach((tokens, index) => {
    if (tokens.length < need) {
      skipped.push(BigInt(index));
      log(`skipping sequence ${index}: ${tokens.length} tokens < ${need}`);
    } else {
      kept.push({seqId: BigInt(index), tokens});
    }
  });

  const tokenRecords: TokenRecord[] = [];
  const matchRecords: MatchRecord[] = [];
  for (let start = 0; start < kept.length; start += job.batchSize) {
    const batch = kept.slice(start, start + job.batchSize);
    const n = batch.length;
    const windows = new Int32Array(n * contextLen);
    for (let b = 0; b < n; b++) {
      for (let c = 0; c < contextLen; c++) {
        windows[b * contextLen + c] =
          batch[b].tokens[job.promptLen - contextLen + c];
      }
    }
    const generated = batch.map(() => new Uint32Array(job.maxContLen));
    for (let step = 0; step < job.maxContLen; step++) {
      let logits: Float32Array;
      try {
        logits = model.logits(windows, n);
      } catch (err) {
        rethrowIfOom(err, job.batchSize);
      }
      for (let b = 0; b < n; b++) {
        const next = argmaxLowest(
          logits.subarray(b * vocab, (b + 1) * vocab) as Float32Array);
        generated[b][step] = next;
        windows.copyWithin(b * contextLen, b * contextLen + 1,
                           (b + 1) * contextLen);
        windows[(b + 1) * contextLen - 1] = next;
      }
    }
    for (let b = 0; b < n; b++) {
      const {seqId, tokens} = batch[b];
      const truth = tokens.subarray(0, need);
      let mask = 0n;
      for (let i = 0; i < job.maxContLen; i++) {
        if (generated[b][i] === tokens[job.promptLen + i]) {
          mask |= 1n << BigInt(i);
        }
      }
      tokenRecords.push({seqId, trueTokens: new Uint32Array(truth),
                         genTokens: generated[b]});
      matchRecords.push({seqId, matchMask: mask});
    }
  }

  writeTokenFile(job.tokenOut, job.promptLen, job.maxContLen, tokenRecords);
  writeMatchRecordFile(job.recordOut, job.modelName, job.checkpointLabel,
                       job.promptLen, job.maxContLen, matchRecords);
  return {records: matchRecords.length, skipped};
}
