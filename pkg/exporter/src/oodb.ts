/**
 * The "OODB" feature-bank binary format (little-endian, version 1).
 *
 * 28-byte header: magic "OODB" | u32 version | u32 n | u32 d | u32 K |
 * u8 flags (bit0 logits, bit1 labels, bit2 head) | 7 zero bytes.
 * Payload, with no other bytes: float32 features (n*d row-major), then
 * float32 logits (n*K), then int32 labels (n), then float32 W (K*d
 * row-major) and float32 b (K), each section present iff its flag is set.
 */

export const HEADER_SIZE = 28
export const MAGIC = 'OODB'

export const FLAG_LOGITS = 1
export const FLAG_LABELS = 2
export const FLAG_HEAD = 4

export interface BankData {
  n: number
  d: number
  K: number
  /** row-major n*d */
  features: Float32Array
  /** row-major n*K */
  logits?: Float32Array
  labels?: Int32Array
  /** row-major K*d */
  headW?: Float32Array
  headB?: Float32Array
}

export function encodeBank(bank: BankData): Buffer {
  const { n, d, K } = bank
  if (bank.features.length !== n * d) {
    throw new Error(`features length ${bank.features.length} != n*d = ${n * d}`)
  }
  let flags = 0
  let payload = 4 * n * d
  if (bank.logits) {
    if (bank.logits.length !== n * K) {
      throw new Error(`logits length ${bank.logits.length} != n*K = ${n * K}`)
    }
    flags |= FLAG_LOGITS
    payload += 4 * n * K
  }
  if (bank.labels) {
    if (bank.labels.length !== n) {
      throw new Error(`labels length ${bank.labels.length} != n = ${n}`)
    }
    flags |= FLAG_LABELS
    payload += 4 * n
  }
  if (bank.headW || bank.headB) {
    if (!bank.headW || !bank.headB) {
      throw new Error('head needs both W and b')
    }
    if (bank.headW.length !== K * d || bank.headB.length !== K) {
      throw new Error('head shape does not match (K, d)')
    }
    flags |= FLAG_HEAD
    payload += 4 * K * d + 4 * K
  }

  const out = Buffer.alloc(HEADER_SIZE + payload)
  out.write(MAGIC, 0, 'ascii')
  out.writeUInt32LE(1, 4)
  out.writeUInt32LE(n, 8)
  out.writeUInt32LE(d, 12)
  out.writeUInt32LE(K, 16)
  out.writeUInt8(flags, 20)
  let pos = HEADER_SIZE
  pos = writeFloats(out, pos, bank.features)
  if (bank.logits) pos = writeFloats(out, pos, bank.logits)
  if (bank.labels) {
    for (const v of bank.labels) {
      out.writeInt32LE(v, pos)
      pos += 4
    }
  }
  if (flags & FLAG_HEAD) {
    pos = writeFloats(out, pos, bank.headW!)
    pos = writeFloats(out, pos, bank.headB!)
  }
  return out
}

function writeFloats(buf: Buffer, pos: number, values: Float32Array): number {
  for (const v of values) {
    buf.writeFloatLE(v, pos)
    pos += 4
  }
  return pos
}

/** Inverse of encodeBank; validates magic, version, and payload length. */
export function decodeBank(raw: Buffer): BankData {
  if (raw.length < HEADER_SIZE) {
    throw new Error(`file has ${raw.length} bytes, header needs ${HEADER_SIZE}`)
  }
  if (raw.toString('ascii', 0, 4) !== MAGIC) {
    throw new Error('bad magic')
  }
  const version = raw.readUInt32LE(4)
  if (version !== 1) throw new Error(`unsupported version ${version}`)
  const n = raw.readUInt32LE(8)
  const d = raw.readUInt32LE(12)
  const K = raw.readUInt32LE(16)
  const flags = raw.readUInt8(20)

  let expected = 4 * n * d
  if (flags & FLAG_LOGITS) expected += 4 * n * K
  if (flags & FLAG_LABELS) expected += 4 * n
  if (flags & FLAG_HEAD) expected += 4 * K * d + 4 * K
  if (raw.length !== HEADER_SIZE + expected) {
    throw new Error(
      `payload is ${raw.length - HEADER_SIZE} bytes, header declares ${expected}`,
    )
  }

  let pos = HEADER_SIZE
  const readFloats = (count: number) => {
    const arr = new Float32Array(count)
    for (let i = 0; i < count; i++) {
      arr[i] = raw.readFloatLE(pos)
      pos += 4
    }
    return arr
  }
  const bank: BankData = { n, d, K, features: readFloats(n * d) }
  if (flags & FLAG_LOGITS) bank.logits = readFloats(n * K)
  if (flags & FLAG_LABELS) {
    const labels = new Int32Array(n)
    for (let i = 0; i < n; i++) {
      labels[i] = raw.readInt32LE(pos)
      pos += 4
    }
    bank.labels = labels
  }
  if (flags & FLAG_HEAD) {
    bank.headW = readFloats(K * d)
    bank.headB = readFloats(K)
  }
  return bank
}
