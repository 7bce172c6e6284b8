#!/usr/bin/env node
import yargs from 'yargs'
import { hideBin } from 'yargs/helpers'

import { exportBank, exportManifest } from './export'

async function main() {
  const argv = await yargs(hideBin(process.argv))
    .command('$0', 'export an OODB feature bank from a tfjs layers model')
    .option('model', {
      type: 'string',
      demandOption: true,
      describe: 'directory with model.json and weight shards',
    })
    .option('data', {
      type: 'string',
      demandOption: true,
      describe: 'dataset root (<root>/<split>/<class>/*.pgm|*.ppm)',
    })
    .option('split', { type: 'string', default: 'val' })
    .option('batch-size', { type: 'number', default: 64 })
    .option('out', { type: 'string', demandOption: true })
    .option('manifest', {
      type: 'string',
      describe: 'also write a text manifest (model id, dims, checksum)',
    })
    .option('device', { type: 'string', default: 'cpu' })
    .strict()
    .parse()

  const spec = {
    model: argv.model,
    data: argv.data,
    split: argv.split,
    batchSize: argv['batch-size'],
    out: argv.out,
    device: argv.device,
  }
  const result = await exportBank(spec)
  console.log(
    `exported ${result.n} samples (d=${result.d}, K=${result.K}) to ` +
      `${result.out}; max head error ${result.maxHeadError.toExponential(2)}`,
  )
  if (argv.manifest) {
    const digest = exportManifest(spec, result, argv.manifest)
    console.log(`manifest ${argv.manifest} (sha256 ${digest.slice(0, 12)}...)`)
  }
}

main().catch(err => {
  console.error(`export failed: ${err.message}`)
  process.exit(1)
})
