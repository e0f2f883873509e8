/**
 * Binary file formats shared with the analytics package (all little-endian).
 *
 * Token file (.mtok):
 *   magic "MTOK" | version u32 | promptLen u8 | maxContLen u8 | count u64
 *   per record: seqId u64
 *               (promptLen + maxContLen) true token ids, u32 each
 *               maxContLen generated token ids, u32 each
 *
 * Match-record file (.mrec):
 *   magic "MREC" | version u32 | nameLen u16 | model name | labelLen u16
 *   | checkpoint label | promptLen u8 | maxContLen u8 | count u64
 *   per record: seqId u64 | matchMask u64   (sorted by seqId)
 *   footer: sha256 of everything before it
 *
 * Tokenized corpus (.tokens), the extractor's input:
 *   per record: length u32 | length token ids, u32 each
 * Records are in training order; the record index is the sequence id.
 */

import {createHash} from 'node:crypto';
import {readFileSync, writeFileSync} from 'node:fs';

const MTOK_MAGIC = 'MTOK';
const MREC_MAGIC = 'MREC';
const FORMAT_VERSION = 1;

export interface TokenRecord {
  seqId: bigint;
  trueTokens: Uint32Array;  // promptLen + maxContLen ids
  genTokens: Uint32Array;   // maxContLen ids
}

export interface MatchRecord {
  seqId: bigint;
  matchMask: bigint;
}

export function readCorpus(path: string): Uint32Array[] {
  const raw = readFileSync(path);
  const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
  const sequences: Uint32Array[] = [];
  let offset = 0;
  while (offset < raw.byteLength) {
    if (offset + 4 > raw.byteLength) {
      throw new Error(`${path}: truncated length header at byte ${offset}`);
    }
    const length = view.getUint32(offset, true);
    offset += 4;
    if (offset + 4 * length > raw.byteLength) {
      throw new Error(`${path}: truncated sequence at byte ${offset}`);
    }
    const tokens = new Uint32Array(length);
    for (let i = 0; i < length; i++) {
      tokens[i] = view.getUint32(offset + 4 * i, true);
    }
    sequences.push(tokens);
    offset += 4 * length;
  }
  return sequences;
}

export function writeCorpus(path: string, sequences: Uint32Array[]): void {
  const total = sequences.reduce((n, s) => n + 4 + 4 * s.length, 0);
  const buf = Buffer.alloc(total);
  let offset = 0;
  for (const seq of sequences) {
    buf.writeUInt32LE(seq.length, offset);
    offset += 4;
    for (const token of seq) {
      buf.writeUInt32LE(token, offset);
      offset += 4;
    }
  }
  writeFileSync(path, buf);
}

export function writeTokenFile(path: string, promptLen: number,
                               maxContLen: number,
                               records: TokenRecord[]): void {
  const header = Buffer.alloc(18);
  header.write(MTOK_MAGIC, 0, 'ascii');
  header.writeUInt32LE(FORMAT_VERSION, 4);
  header.writeUInt8(promptLen, 8);
  header.writeUInt8(maxContLen, 9);
  header.writeBigUInt64LE(BigInt(records.length), 10);

  const recordSize = 8 + 4 * (promptLen + 2 * maxContLen);
  const body = Buffer.alloc(recordSize * records.length);
  let offset = 0;
  for (const rec of records) {
    if (rec.trueTokens.length !== promptLen + maxContLen ||
        rec.genTokens.length !== maxContLen) {
      throw new Error(`record ${rec.seqId}: token array lengths do not match header`);
    }
    body.writeBigUInt64LE(rec.seqId, offset);
    offset += 8;
    for (const token of rec.trueTokens) {
      body.writeUInt32LE(token >>> 0, offset);
      offset += 4;
    }
    for (const token of rec.genTokens) {
      body.writeUInt32LE(token >>> 0, offset);
      offset += 4;
    }
  }
  writeFileSync(path, Buffer.concat([header, body]));
}

export function writeMatchRecordFile(path: string, modelName: string,
                                     checkpointLabel: string, promptLen: number,
                                     maxContLen: number,
                                     records: MatchRecord[]): void {
  const name = Buffer.from(modelName, 'utf-8');
  const label = Buffer.from(checkpointLabel, 'utf-8');
  const header = Buffer.alloc(4 + 4 + 2 + name.length + 2 + label.length + 1 + 1 + 8);
  let offset = 0;
  header.write(MREC_MAGIC, offset, 'ascii');
  offset += 4;
  header.writeUInt32LE(FORMAT_VERSION, offset);
  offset += 4;
  header.writeUInt16LE(name.length, offset);
  offset += 2;
  name.copy(header, offset);
  offset += name.length;
  header.writeUInt16LE(label.length, offset);
  offset += 2;
  label.copy(header, offset);
  offset += label.length;
  header.writeUInt8(promptLen, offset);
  header.writeUInt8(maxContLen, offset + 1);
  header.writeBigUInt64LE(BigInt(records.length), offset + 2);

  const body = Buffer.alloc(16 * records.length);
  const maskLimit = (1n << BigInt(maxContLen)) - 1n;
  let prev = -1n;
  offset = 0;
  for (const rec of records) {
    if (rec.seqId <= prev) {
      throw new Error(`records not strictly increasing at seqId ${rec.seqId}`);
    }
    if (rec.matchMask > maskLimit) {
      throw new Error(`record ${rec.seqId}: mask bits above maxContLen=${maxContLen}`);
    }
    prev = rec.seqId;
    body.writeBigUInt64LE(rec.seqId, offset);
    body.writeBigUInt64LE(rec.matchMask, offset + 8);
    offset += 16;
  }
  const contents = Buffer.concat([header, body]);
  const digest = createHash('sha256').update(contents).digest();
  writeFileSync(path, Buffer.concat([contents, digest]));
}

export interface MatchFile {
  modelName: string;
  checkpointLabel: string;
  promptLen: number;
  maxContLen: number;
  records: MatchRecord[];
}

/** Reader used by the tests; verifies the checksum and record ordering. */
export function readMatchRecordFile(path: string): MatchFile {
  const raw = readFileSync(path);
  if (raw.length < 32) throw new Error(`${path}: too small`);
  const contents = raw.subarray(0, raw.length - 32);
  const digest = createHash('sha256').update(contents).digest();
  if (!digest.equals(raw.subarray(raw.length - 32))) {
    throw new Error(`${path}: checksum mismatch`);
  }
  if (contents.toString('ascii', 0, 4) !== MREC_MAGIC) {
    throw new Error(`${path}: bad magic`);
  }
  let offset = 4;
  const version = contents.readUInt32LE(offset);
  offset += 4;
  if (version !== FORMAT_VERSION) throw new Error(`${path}: version ${version}`);
  const nameLen = contents.readUInt16LE(offset);
  offset += 2;
  const modelName = contents.toString('utf-8', offset, offset + nameLen);
  offset += nameLen;
  const labelLen = contents.readUInt16LE(offset);
  offset += 2;
  const checkpointLabel = contents.toString('utf-8', offset, offset + labelLen);
  offset += labelLen;
  const promptLen = contents.readUInt8(offset);
  const maxContLen = contents.readUInt8(offset + 1);
  const count = contents.readBigUInt64LE(offset + 2);
  offset += 10;
  if (BigInt(contents.length - offset) !== count * 16n) {
    throw new Error(`${path}: payload does not match declared count ${count}`);
  }
  const records: MatchRecord[] = [];
  let prev = -1n;
  for (let i = 0n; i < count; i++) {
    const seqId = contents.readBigUInt64LE(offset);
    const matchMask = contents.readBigUInt64LE(offset + 8);
    if (seqId <= prev) throw new Error(`${path}: unsorted seqId ${seqId}`);
    prev = seqId;
    records.push({seqId, matchMask});
    offset += 16;
  }
  return {modelName, checkpointLabel, promptLen, maxContLen, records};
}

/** Fraction of records whose low maxContLen mask bits are all set. */
export function memorizedFraction(file: MatchFile): number {
  if (file.records.length === 0) return 0;
  const full = (1n << BigInt(file.maxContLen)) - 1n;
  let hits = 0;
  for (const rec of file.records) {
    if ((rec.matchMask & full) === full) hits++;
  }
  return hits / file.records.length;
}
