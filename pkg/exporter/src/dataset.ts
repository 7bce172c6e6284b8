/**
 * Dataset layout: <root>/<split>/<class-name>/<image>.pgm|.ppm with
 * binary PGM (grayscale) or PPM (RGB) images, maxval 255. Class ids are
 * the sorted class-directory indices; iteration order is sorted class
 * dirs, then sorted filenames, which fixes the export order.
 */

import * as fs from 'fs'
import * as path from 'path'

export interface Sample {
  path: string
  label: number
}

export interface DecodedImage {
  width: number
  height: number
  channels: number
  /** pixel values scaled to [0, 1], HWC order */
  data: Float32Array
}

export function listSamples(root: string, split: string): Sample[] {
  const splitDir = path.join(root, split)
  if (!fs.existsSync(splitDir)) {
    throw new Error(`dataset split not found: ${splitDir}`)
  }
  const classes = fs
    .readdirSync(splitDir, { withFileTypes: true })
    .filter(e => e.isDirectory())
    .map(e => e.name)
    .sort()
  if (classes.length === 0) {
    throw new Error(`no class directories under ${splitDir}`)
  }
  const samples: Sample[] = []
  classes.forEach((cls, label) => {
    const files = fs
      .readdirSync(path.join(splitDir, cls))
      .filter(f => /\.(pgm|ppm)$/i.test(f))
      .sort()
    for (const f of files) {
      samples.push({ path: path.join(splitDir, cls, f), label })
    }
  })
  if (samples.length === 0) {
    throw new Error(`no .pgm/.ppm images under ${splitDir}`)
  }
  return samples
}

export function decodePnm(raw: Buffer): DecodedImage {
  const magic = raw.toString('ascii', 0, 2)
  if (magic !== 'P5' && magic !== 'P6') {
    throw new Error(`unsupported image magic ${magic}; need binary PGM/PPM`)
  }
  const channels = magic === 'P5' ? 1 : 3
  // header tokens: width, height, maxval; comments start with '#'
  let pos = 2
  const tokens: number[] = []
  while (tokens.length < 3) {
    while (pos < raw.length && isSpace(raw[pos])) pos++
    if (raw[pos] === 0x23) {
      while (pos < raw.length && raw[pos] !== 0x0a) pos++
      continue
    }
    let start = pos
    while (pos < raw.length && !isSpace(raw[pos])) pos++
    tokens.push(parseInt(raw.toString('ascii', start, pos), 10))
  }
  pos++ // single whitespace after maxval
  const [width, height, maxval] = tokens
  if (maxval !== 255) {
    throw new Error(`maxval ${maxval} unsupported; need 8-bit images`)
  }
  const count = width * height * channels
  if (raw.length - pos < count) {
    throw new Error('truncated image payload')
  }
  const data = new Float32Array(count)
  for (let i = 0; i < count; i++) {
    data[i] = raw[pos + i] / 255
  }
  return { width, height, channels, data }
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d
}

export function loadImage(samplePath: string, expectShape: number[]): Float32Array {
  const img = decodePnm(fs.readFileSync(samplePath))
  const [h, w, c] = expectShape
  if (img.height !== h || img.width !== w || img.channels !== c) {
    throw new Error(
      `${samplePath} is ${img.height}x${img.width}x${img.channels}, model ` +
        `expects ${h}x${w}x${c}`,
    )
  }
  return img.data
}
