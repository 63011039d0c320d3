export { Tensor, TensorFileError, readTensor, writeTensor } from './tensorfile.js';
export { ImageRecord, Split, readManifest, writeManifest } from './manifest.js';
export { Rng } from './rng.js';
export { BackboneVariant, VARIANTS, getVariant, tokenCount } from './variants.js';
export {
  BlockWeights,
  VitConfig,
  VitWeights,
  extractTokens,
  loadWeights,
  patchTokens,
  randomWeights,
} from './vit.js';
export { SynthesizeOptions, synthesize } from './synthetic.js';
export { ExportJob, runExport, vitConfigFor } from './export.js';
