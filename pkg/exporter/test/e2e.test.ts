/**
 * End-to-end acceptance: export a bank from a classifier and drive the
 * detection toolkit's `eval` command over the produced file. The
 * classifier is a locally saved tfjs model (no model zoo is reachable
 * from this environment); any standard layers model with a linear head
 * works the same way.
 */

import { execFileSync } from 'child_process'
import * as fs from 'fs'
import * as os from 'os'
import * as path from 'path'
import { afterAll, beforeAll, describe, expect, it } from 'vitest'

import { exportBank, verifyHeadConsistency } from '../src/export'
import { makeDataset, saveFixtureModel } from '../src/fixture'
import { decodeBank } from '../src/oodb'

let root: string
let bankPath: string

beforeAll(async () => {
  root = fs.mkdtempSync(path.join(os.tmpdir(), 'oodb-e2e-'))
  await saveFixtureModel(path.join(root, 'model'), { seed: 3, classes: 4 })
  makeDataset({
    root: path.join(root, 'data'),
    split: 'val',
    classes: 4,
    perClass: 25,
    seed: 5,
  })
  const result = await exportBank({
    model: path.join(root, 'model'),
    data: path.join(root, 'data'),
    split: 'val',
    batchSize: 32,
    out: path.join(root, 'bank.oodb'),
  })
  bankPath = result.out
}, 120_000)

afterAll(() => {
  fs.rmSync(root, { recursive: true, force: true })
})

describe('exported bank', () => {
  it('satisfies head consistency on all 100 samples', () => {
    const bank = decodeBank(fs.readFileSync(bankPath))
    expect(bank.n).toBe(100)
    const worst = verifyHeadConsistency(
      bank.features, bank.logits!, bank.headW!, bank.headB!,
      bank.n, bank.d, bank.K,
    )
    expect(worst).toBeLessThanOrEqual(1e-4)
  })

  it('recomputes within the detection toolkit to the same logits', () => {
    const script = [
      'import sys, numpy as np',
      'from oodkit import read_bank',
      'bank, head = read_bank(sys.argv[1])',
      'recomputed = head.logits(bank.features)',
      'scale = np.maximum(np.linalg.norm(bank.logits, axis=1), 1e-12)',
      'err = np.linalg.norm(bank.logits - recomputed, axis=1) / scale',
      'assert err.max() <= 1e-4, err.max()',
      'print("max rel err", err.max())',
    ].join('\n')
    const stdout = execFileSync('python3', ['-c', script, bankPath], {
      encoding: 'utf8',
    })
    expect(stdout).toContain('max rel err')
  })

  it('runs through the detection toolkit eval without error', () => {
    const out = path.join(root, 'table.tsv')
    const stdout = execFileSync(
      'python3',
      ['-m', 'oodkit.cli', 'eval',
       '--bank', bankPath, '--id', bankPath, '--ood', `self=${bankPath}`,
       '--scores', 'nnguide,energy,knn,mahalanobis', '--k', '10',
       '--out', out],
      { encoding: 'utf8' },
    )
    expect(stdout).toContain('average')
    const table = fs.readFileSync(out, 'utf8')
    expect(table.startsWith('score\tood\tfpr95\tauroc\taupr')).toBe(true)
    // identical ID and OOD sets rank at chance level
    for (const line of table.trim().split('\n').slice(1)) {
      const auroc = parseFloat(line.split('\t')[3])
      expect(Math.abs(auroc - 0.5)).toBeLessThanOrEqual(1e-9)
    }
  })
})
