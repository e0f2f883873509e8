/** mulberry32: small deterministic PRNG for toy corpora and tests. */
export function makeRng(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function randomCorpus(seed: number, sequences: number, length: number,
                             vocab: number): Uint32Array[] {
  const rng = makeRng(seed);
  const corpus: Uint32Array[] = [];
  for (let s = 0; s < sequences; s++) {
    const tokens = new Uint32Array(length);
    for (let t = 0; t < length; t++) {
      tokens[t] = Math.floor(rng() * vocab);
    }
    corpus.push(tokens);
  }
  return corpus;
}
