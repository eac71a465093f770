"""Exports ImageNet-pretrained backbones in the formats the C++ loaders read.

  efficientnet_b7.pt  TorchScript feature extractor (N,3,H,W) -> (N,2560),
                      classifier replaced by an identity
  vit_b16.pt          ViT-B/16 state_dict saved as a plain dict of tensors

Usage: python3 tools/export_backbones.py --out weights/ [--only efficientnet_b7|vit_b16]

torchvision downloads the ImageNet weights on first use (network needed once).
Reference the exported files from a model spec via its "weights" field.
"""

import argparse
from pathlib import Path

import torch
from torch import nn
from torchvision import models


def export_efficientnet_b7(out: Path) -> None:
    model = models.efficientnet_b7(weights=models.EfficientNet_B7_Weights.IMAGENET1K_V1)
    model.classifier = nn.Identity()
    model.eval()
    scripted = torch.jit.script(model)
    with torch.no_grad():
        width = scripted(torch.zeros(1, 3, 128, 128)).shape[1]
    scripted.save(str(out / "efficientnet_b7.pt"))
    print(f"efficientnet_b7.pt: embedding width {width}")


def export_vit_b16(out: Path) -> None:
    model = models.vit_b_16(weights=models.ViT_B_16_Weights.IMAGENET1K_V1)
    # The C++ unpickler does not rebuild collections.OrderedDict; save a plain dict.
    state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    torch.save(state, out / "vit_b16.pt")
    print(f"vit_b16.pt: {len(state)} tensors, pos_embedding {tuple(state['encoder.pos_embedding'].shape)}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--out", type=Path, required=True, help="output directory")
    parser.add_argument("--only", choices=["efficientnet_b7", "vit_b16"], help="export a single backbone")
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    if args.only in (None, "efficientnet_b7"):
        export_efficientnet_b7(args.out)
    if args.only in (None, "vit_b16"):
        export_vit_b16(args.out)


if __name__ == "__main__":
    main()
