/**
 * Loading a TensorFlow.js layers model from disk and splitting it into
 * (penultimate features, logits, linear head).
 *
 * The classifier head must be the model's final layer, a Dense layer
 * with linear activation; its input is taken as the penultimate
 * feature. Models whose last Dense applies a fused nonlinearity (e.g.
 * softmax) do not expose raw logits and are rejected with a diagnostic.
 */

import * as fs from 'fs'
import * as path from 'path'
import * as tf from '@tensorflow/tfjs'

export interface SplitModel {
  /** maps an input batch to [features (n,d), logits (n,K)] */
  run: (input: tf.Tensor) => { features: tf.Tensor2D; logits: tf.Tensor2D }
  /** row-major K*d, logits = features . W^T + b */
  headW: Float32Array
  headB: Float32Array
  d: number
  K: number
  inputShape: number[]
  dispose: () => void
}

/**
 * Read standard tfjs layers-model artifacts (model.json plus weight
 * shards) without the tfjs-node filesystem handler, so the exporter runs
 * on the pure-JS backend.
 */
export async function loadModelFromDir(dir: string): Promise<tf.LayersModel> {
  const manifestPath = path.join(dir, 'model.json')
  if (!fs.existsSync(manifestPath)) {
    throw new Error(`${dir} has no model.json`)
  }
  const manifest = JSON.parse(fs.readFileSync(manifestPath, 'utf8'))
  const weightSpecs: tf.io.WeightsManifestEntry[] = []
  const shards: Buffer[] = []
  for (const group of manifest.weightsManifest ?? []) {
    weightSpecs.push(...group.weights)
    for (const shardPath of group.paths) {
      shards.push(fs.readFileSync(path.join(dir, shardPath)))
    }
  }
  const weightData = new Uint8Array(Buffer.concat(shards)).buffer
  return tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: manifest.modelTopology,
      weightSpecs,
      weightData,
    }),
  )
}

/** Counterpart used by tests and fixtures to lay models out on disk. */
export async function saveModelToDir(model: tf.LayersModel, dir: string) {
  fs.mkdirSync(dir, { recursive: true })
  await model.save(
    tf.io.withSaveHandler(async artifacts => {
      const weightData = artifacts.weightData as ArrayBuffer
      fs.writeFileSync(path.join(dir, 'weights.bin'), Buffer.from(weightData))
      const manifest = {
        modelTopology: artifacts.modelTopology,
        weightsManifest: [
          { paths: ['weights.bin'], weights: artifacts.weightSpecs },
        ],
      }
      fs.writeFileSync(path.join(dir, 'model.json'), JSON.stringify(manifest))
      return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: 'JSON' } }
    }),
  )
}

export function splitClassifier(model: tf.LayersModel): SplitModel {
  const layers = model.layers
  const last = layers[layers.length - 1]
  if (last.getClassName() !== 'Dense') {
    throw new Error(
      `cannot identify the penultimate layer: final layer is ` +
        `${last.getClassName()}, expected a Dense classifier head`,
    )
  }
  const activation = (last.getConfig().activation ?? 'linear') as string
  if (activation !== 'linear') {
    throw new Error(
      `final Dense layer applies a fused '${activation}' activation, so the ` +
        `model does not expose raw logits; re-export the model with a ` +
        `linear head`,
    )
  }
  const penultimate = last.input
  if (Array.isArray(penultimate)) {
    throw new Error('classifier head has multiple inputs')
  }
  if (penultimate.shape.length !== 2) {
    throw new Error(
      `penultimate tensor has shape [${penultimate.shape}], expected ` +
        `[batch, d]; add a flatten/pooling stage before the head`,
    )
  }
  const tapped = tf.model({
    inputs: model.inputs,
    outputs: [penultimate as tf.SymbolicTensor, model.outputs[0]],
  })
  const [kernel, bias] = extractHead(last)
  const d = penultimate.shape[1] as number
  const K = (model.outputs[0].shape[1] ?? 0) as number
  return {
    run: input => {
      const [features, logits] = tapped.predict(input) as tf.Tensor[]
      return { features: features as tf.Tensor2D, logits: logits as tf.Tensor2D }
    },
    headW: kernel,
    headB: bias,
    d,
    K,
    inputShape: model.inputs[0].shape.slice(1) as number[],
    dispose: () => tapped.dispose(),
  }
}

/** Dense stores kernel as (d, K); the bank format wants W as (K, d). */
function extractHead(dense: tf.layers.Layer): [Float32Array, Float32Array] {
  const weights = dense.getWeights()
  const kernel = weights[0]
  const [d, K] = kernel.shape as [number, number]
  const kernelData = kernel.dataSync() as Float32Array
  const W = new Float32Array(K * d)
  for (let i = 0; i < d; i++) {
    for (let c = 0; c < K; c++) {
      W[c * d + i] = kernelData[i * K + c]
    }
  }
  const b = new Float32Array(K)
  if (weights.length > 1) {
    b.set(weights[1].dataSync() as Float32Array)
  }
  return [W, b]
}
