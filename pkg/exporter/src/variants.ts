/** The four backbone variants: patch size, block count, embedding width. */

export interface BackboneVariant {
  name: string;
  patchSize: number;
  blocks: number;
  embedDim: number;
}

export const VARIANTS: Record<string, BackboneVariant> = {
  vits14: { name: 'vits14', patchSize: 14, blocks: 12, embedDim: 384 },
  vitb14: { name: 'vitb14', patchSize: 14, blocks: 24, embedDim: 768 },
  vitl14: { name: 'vitl14', patchSize: 14, blocks: 24, embedDim: 1024 },
  vitg14: { name: 'vitg14', patchSize: 14, blocks: 40, embedDim: 1536 },
};

export function getVariant(name: string): BackboneVariant {
  const v = VARIANTS[name];
  if (!v) {
    throw new Error(
      `unknown backbone ${JSON.stringify(name)}; expected one of ${Object.keys(VARIANTS).join(', ')} or "synthetic"`,
    );
  }
  return v;
}

/** Patch tokens per image: (side / patch)^2; side must divide evenly. */
export function tokenCount(variant: BackboneVariant, imageSide: number): number {
  if (imageSide % variant.patchSize !== 0) {
    throw new Error(
      `image side ${imageSide} is not divisible by patch size ${variant.patchSize}`,
    );
  }
  const perSide = imageSide / variant.patchSize;
  return perSide * perSide;
}
