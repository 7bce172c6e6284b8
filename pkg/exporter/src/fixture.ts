/**
 * Deterministic fixtures for tests and offline demos: a small seeded
 * classifier saved in the standard tfjs layout, and a PGM image dataset
 * whose classes differ by intensity band. Stands in for a published
 * model where no model zoo is reachable.
 */

import * as fs from 'fs'
import * as path from 'path'
import * as tf from '@tensorflow/tfjs'

import { saveModelToDir } from './model'

export const IMAGE_SIZE = 8

export function buildClassifier(opts: {
  seed: number
  classes: number
  hidden?: number
  finalActivation?: string
}): tf.LayersModel {
  const { seed, classes } = opts
  const model = tf.sequential()
  model.add(
    tf.layers.flatten({ inputShape: [IMAGE_SIZE, IMAGE_SIZE, 1] }),
  )
  model.add(
    tf.layers.dense({
      units: opts.hidden ?? 16,
      activation: 'relu',
      kernelInitializer: tf.initializers.glorotUniform({ seed }),
      biasInitializer: 'zeros',
    }),
  )
  model.add(
    tf.layers.dense({
      units: classes,
      activation: (opts.finalActivation ?? 'linear') as any,
      kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 1 }),
      biasInitializer: tf.initializers.randomUniform({
        minval: -0.1,
        maxval: 0.1,
        seed: seed + 2,
      }),
    }),
  )
  return model
}

export async function saveFixtureModel(
  dir: string,
  opts: { seed: number; classes: number; hidden?: number; finalActivation?: string },
) {
  const model = buildClassifier(opts)
  await saveModelToDir(model, dir)
  model.dispose()
}

/** Small multiplicative-congruential generator so pixels are seedable. */
function lcg(seed: number) {
  let state = seed >>> 0 || 1
  return () => {
    state = (state * 1664525 + 1013904223) >>> 0
    return state / 0x100000000
  }
}

export function writePgm(filePath: string, pixels: Uint8Array, size: number) {
  const header = Buffer.from(`P5\n${size} ${size}\n255\n`, 'ascii')
  fs.writeFileSync(filePath, Buffer.concat([header, Buffer.from(pixels)]))
}

export function makeDataset(opts: {
  root: string
  split: string
  classes: number
  perClass: number
  seed: number
}) {
  const rand = lcg(opts.seed)
  for (let cls = 0; cls < opts.classes; cls++) {
    const dir = path.join(opts.root, opts.split, `class_${cls}`)
    fs.mkdirSync(dir, { recursive: true })
    for (let i = 0; i < opts.perClass; i++) {
      const pixels = new Uint8Array(IMAGE_SIZE * IMAGE_SIZE)
      const base = 40 + cls * Math.floor(160 / Math.max(opts.classes - 1, 1))
      for (let p = 0; p < pixels.length; p++) {
        const noise = Math.floor(rand() * 60) - 30
        pixels[p] = Math.min(255, Math.max(0, base + noise))
      }
      writePgm(path.join(dir, `img_${String(i).padStart(3, '0')}.pgm`), pixels,
               IMAGE_SIZE)
    }
  }
}

if (require.main === module) {
  const out = process.argv[2] ?? 'fixture'
  saveFixtureModel(path.join(out, 'model'), { seed: 7, classes: 4 }).then(() => {
    makeDataset({
      root: path.join(out, 'data'),
      split: 'val',
      classes: 4,
      perClass: 30,
      seed: 11,
    })
    console.log(`fixture written under ${out}/`)
  })
}
