/**
 * A deliberately small causal language model: next-token prediction from a
 * fixed-width context window (embed, flatten, one hidden layer). Big enough
 * to copy a toy corpus verbatim, small enough to train on the pure-JS
 * backend in minutes.
 */

import * as tf from '@tensorflow/tfjs';
import {readFileSync, writeFileSync} from 'node:fs';

export interface ModelConfig {
  vocab: number;
  contextLen: number;
  dEmbed: number;
  dHidden: number;
}

interface SavedWeights {
  config: ModelConfig;
  weights: {shape: number[]; data: string}[];  // base64 float32
}

/** Greedy pick; ties between equal logits resolve to the lowest token id. */
export function argmaxLowest(logits: Float32Array): number {
  let best = 0;
  for (let i = 1; i < logits.length; i++) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

export class NextTokenModel {
  readonly config: ModelConfig;
  readonly model: tf.LayersModel;

  constructor(config: ModelConfig, seed = 0) {
    this.config = config;
    this.model = tf.sequential({
      layers: [
        tf.layers.embedding({
          inputDim: config.vocab,
          outputDim: config.dEmbed,
          inputLength: config.contextLen,
          embeddingsInitializer: tf.initializers.glorotUniform({seed}),
        }),
        tf.layers.flatten(),
        tf.layers.dense({
          units: config.dHidden,
          activation: 'relu',
          kernelInitializer: tf.initializers.glorotUniform({seed: seed + 1}),
        }),
        tf.layers.dense({
          units: config.vocab,
          kernelInitializer: tf.initializers.glorotUniform({seed: seed + 2}),
        }),
      ],
    });
  }

  paramCount(): number {
    return this.model.countParams();
  }

  /** Logits for a batch of contexts, flattened row-major [batch, vocab]. */
  logits(contexts: Int32Array, batch: number): Float32Array {
    const {contextLen, vocab} = this.config;
    const out = tf.tidy(() => {
      const x = tf.tensor2d(Array.from(contexts), [batch, contextLen], 'int32');
      return this.model.predict(x) as tf.Tensor2D;
    });
    const data = out.dataSync() as Float32Array;
    out.dispose();
    if (data.length !== batch * vocab) {
      throw new Error(`expected ${batch * vocab} logits, got ${data.length}`);
    }
    return data;
  }

  save(path: string): void {
    const weights: SavedWeights['weights'] = this.model.getWeights().map(w => {
      const data = w.dataSync() as Float32Array;
      return {
        shape: w.shape.slice(),
        data: Buffer.from(data.buffer, data.byteOffset, data.byteLength)
          .toString('base64'),
      };
    });
    const doc: SavedWeights = {config: this.config, weights};
    writeFileSync(path, JSON.stringify(doc));
  }

  static load(path: string): NextTokenModel {
    const doc = JSON.parse(readFileSync(path, 'utf-8')) as SavedWeights;
    const model = new NextTokenModel(doc.config);
    const tensors = doc.weights.map(w => {
      const buf = Buffer.from(w.data, 'base64');
      const data = new Float32Array(buf.buffer, buf.byteOffset,
                                    buf.byteLength / 4);
      return tf.tensor(Array.from(data), w.shape);
    });
    model.model.setWeights(tensors);
    tensors.forEach(t => t.dispose());
    return model;
  }
}

export interface TrainResult {
  epochs: number;
  accuracy: number;  // teacher-forced greedy accuracy over all pairs
  loss: number;
}

/**
 * Build (context -> next token) pairs for the continuation region of each
 * corpus sequence: positions promptLen .. promptLen+contLen-1. Only these
 * positions matter for greedy extraction, and once the model predicts each
 * of them correctly under teacher forcing, greedy decoding reproduces the
 * continuations exactly (the decode contexts coincide by induction).
 */
export function continuationPairs(corpus: Uint32Array[], contextLen: number,
                                  promptLen: number, contLen: number):
    {x: Int32Array; y: Int32Array; count: number} {
  if (contextLen > promptLen) {
    throw new Error('contextLen must not exceed promptLen');
  }
  const usable = corpus.filter(s => s.length >= promptLen + contLen);
  const count = usable.length * contLen;
  const x = new Int32Array(count * contextLen);
  const y = new Int32Array(count);
  let row = 0;
  for (const seq of usable) {
    for (let t = promptLen; t < promptLen + contLen; t++) {
      for (let c = 0; c < contextLen; c++) {
        x[row * contextLen + c] = seq[t - contextLen + c];
      }
      y[row] = seq[t];
      row++;
    }
  }
  return {x, y, count};
}

export function teacherForcedAccuracy(model: NextTokenModel, x: Int32Array,
                                      y: Int32Array, count: number): number {
  const {contextLen, vocab} = model.config;
  let correct = 0;
  const batch = 512;
  for (let start = 0; start < count; start += batch) {
    const n = Math.min(batch, count - start);
    const logits = model.logits(
      x.subarray(start * contextLen, (start + n) * contextLen), n);
    for (let i = 0; i < n; i++) {
      if (argmaxLowest(logits.subarray(i * vocab, (i + 1) * vocab) as
                       Float32Array) === y[start + i]) {
        correct++;
      }
    }
  }
  return correct / count;
}

export interface TrainOptions {
  maxEpochs?: number;
  batchSize?: number;
  learningRate?: number;
  checkEvery?: number;
  seed?: number;
  verbose?: boolean;
}

/** Train until every continuation token is the greedy argmax (or give up). */
export async function trainToCopy(model: NextTokenModel, corpus: Uint32Array[],
                                  promptLen: number, contLen: number,
                                  opts: TrainOptions = {}): Promise<TrainResult> {
  const {contextLen, vocab} = model.config;
  const maxEpochs = opts.maxEpochs ?? 600;
  const batchSize = opts.batchSize ?? 128;
  const checkEvery = opts.checkEvery ?? 5;
  const optimizer = tf.train.adam(opts.learningRate ?? 3e-3);
  const {x, y, count} = continuationPairs(corpus, contextLen, promptLen, contLen);
  if (count === 0) throw new Error('corpus has no usable sequences');

  // simple multiplicative-congruential shuffle, deterministic per seed
  let state = (opts.seed ?? 1) >>> 0 || 1;
  const nextRand = () => {
    state = (Math.imul(state, 1664525) + 1013904223) >>> 0;
    return state / 2 ** 32;
  };
  const order = Array.from({length: count}, (_, i) => i);

  let lastLoss = Number.POSITIVE_INFINITY;
  for (let epoch = 1; epoch <= maxEpochs; epoch++) {
    // keep the event loop responsive during long CPU-bound training
    await new Promise(resolve => setImmediate(resolve));
    for (let i = count - 1; i > 0; i--) {
      const j = Math.floor(nextRand() * (i + 1));
      [order[i], order[j]] = [order[j], order[i]];
    }
    let epochLoss = 0;
    for (let start = 0; start < count; start += batchSize) {
      const n = Math.min(batchSize, count - start);
      const bx = new Int32Array(n * contextLen);
      const by = new Int32Array(n);
      for (let i = 0; i < n; i++) {
        const src = order[start + i];
        bx.set(x.subarray(src * contextLen, (src + 1) * contextLen),
               i * contextLen);
        by[i] = y[src];
      }
      const lossVal = optimizer.minimize(() => tf.tidy(() => {
        const inputs = tf.tensor2d(Array.from(bx), [n, contextLen], 'int32');
        const logits = model.model.apply(inputs, {training: true}) as tf.Tensor2D;
        const labels = tf.oneHot(tf.tensor1d(Array.from(by), 'int32'), vocab);
        return tf.losses.softmaxCrossEntropy(labels, logits) as tf.Scalar;
      }), true);
      epochLoss += lossVal!.dataSync()[0];
      lossVal!.dispose();
    }
    lastLoss = epochLoss / Math.ceil(count / batchSize);
    if (epoch % checkEvery === 0 || epoch === maxEpochs) {
      const accuracy = teacherForcedAccuracy(model, x, y, count);
      if (opts.verbose) {
        console.error(`epoch ${epoch}: loss ${lastLoss.toFixed(4)} `
                      + `accuracy ${accuracy.toFixed(4)}`);
      }
      if (accuracy === 1.0) {
        optimizer.dispose();
        return {epochs: epoch, accuracy, loss: lastLoss};
      }
    }
  }
  optimizer.dispose();
  const accuracy = teacherForcedAccuracy(model, x, y, count);
  return {epochs: maxEpochs, accuracy, loss: lastLoss};
}
