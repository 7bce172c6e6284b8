/**
 * Export a feature bank from a pretrained classifier: penultimate
 * features, logits, labels, and the final linear layer, written as one
 * OODB file that the detection toolkit consumes directly.
 *
 * Export is read-only over the model and deterministic: sample order is
 * the dataset iteration order, and the forward pass runs on the CPU
 * backend. Every export is verified for head consistency (logits equal
 * W.z + b within 1e-4 relative error per row); a model that fails the
 * check does not produce a file.
 */

import * as crypto from 'crypto'
import * as fs from 'fs'
import * as path from 'path'
import * as tf from '@tensorflow/tfjs'

import { listSamples, loadImage } from './dataset'
import { loadModelFromDir, splitClassifier } from './model'
import { BankData, encodeBank } from './oodb'

export const HEAD_CONSISTENCY_TOLERANCE = 1e-4

export interface ExportSpec {
  /** directory holding model.json + weight shards */
  model: string
  /** dataset root; images live under <root>/<split>/<class>/ */
  data: string
  split: string
  batchSize: number
  out: string
  /** only 'cpu' is meaningful on the pure-JS backend; kept as a hint */
  device?: string
}

export interface ExportResult {
  n: number
  d: number
  K: number
  out: string
  maxHeadError: number
}

export async function exportBank(spec: ExportSpec): Promise<ExportResult> {
  const model = await loadModelFromDir(spec.model)
  const split = splitClassifier(model)
  try {
    const samples = listSamples(spec.data, spec.split)
    const n = samples.length
    const { d, K } = split
    const features = new Float32Array(n * d)
    const logits = new Float32Array(n * K)
    const labels = new Int32Array(n)

    const shape = split.inputShape
    const pixelsPer = shape.reduce((a, b) => a * b, 1)
    for (let start = 0; start < n; start += spec.batchSize) {
      const batch = samples.slice(start, start + spec.batchSize)
      const pixels = new Float32Array(batch.length * pixelsPer)
      batch.forEach((sample, i) => {
        pixels.set(loadImage(sample.path, shape), i * pixelsPer)
        labels[start + i] = sample.label
      })
      const input = tf.tensor(pixels, [batch.length, ...shape])
      const outputs = split.run(input)
      features.set(outputs.features.dataSync() as Float32Array, start * d)
      logits.set(outputs.logits.dataSync() as Float32Array, start * K)
      input.dispose()
      outputs.features.dispose()
      outputs.logits.dispose()
    }

    const maxHeadError = verifyHeadConsistency(
      features, logits, split.headW, split.headB, n, d, K,
    )

    const bank: BankData = {
      n, d, K, features, logits, labels,
      headW: split.headW,
      headB: split.headB,
    }
    fs.mkdirSync(path.dirname(path.resolve(spec.out)), { recursive: true })
    fs.writeFileSync(spec.out, encodeBank(bank))
    return { n, d, K, out: spec.out, maxHeadError }
  } finally {
    // the tapped sub-model shares its layers with the original, so one
    // dispose covers both
    split.dispose()
  }
}

/**
 * Max relative row error of the exported logits against W.z + b. Models
 * whose classifier is not a single linear layer surface here and are
 * rejected with a diagnostic instead of producing a bank.
 */
export function verifyHeadConsistency(
  features: Float32Array,
  logits: Float32Array,
  headW: Float32Array,
  headB: Float32Array,
  n: number,
  d: number,
  K: number,
): number {
  let worst = 0
  for (let i = 0; i < n; i++) {
    let errSq = 0
    let refSq = 0
    for (let c = 0; c < K; c++) {
      let acc = headB[c]
      for (let j = 0; j < d; j++) {
        acc += headW[c * d + j] * features[i * d + j]
      }
      const got = logits[i * K + c]
      errSq += (got - acc) * (got - acc)
      refSq += got * got
    }
    const rel = Math.sqrt(errSq) / Math.max(Math.sqrt(refSq), 1e-12)
    worst = Math.max(worst, rel)
  }
  if (worst > HEAD_CONSISTENCY_TOLERANCE) {
    throw new Error(
      `exported logits deviate from W.z + b by ${worst.toExponential(3)} ` +
        `relative error (tolerance ${HEAD_CONSISTENCY_TOLERANCE}); the ` +
        `model's classifier is not a single linear layer over the ` +
        `exported features`,
    )
  }
  return worst
}

export function exportManifest(
  spec: ExportSpec,
  result: ExportResult,
  manifestPath: string,
) {
  const digest = crypto
    .createHash('sha256')
    .update(fs.readFileSync(result.out))
    .digest('hex')
  const lines = [
    `model: ${spec.model}`,
    `split: ${spec.split}`,
    `n: ${result.n}`,
    `d: ${result.d}`,
    `K: ${result.K}`,
    `bank: ${path.basename(result.out)}`,
    `sha256: ${digest}`,
  ]
  fs.writeFileSync(manifestPath, lines.join('\n') + '\n')
  return digest
}
