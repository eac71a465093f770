"""Regenerates the pretrained-backbone fixtures used by the model tests.

vit_tiny.pt            torchvision VisionTransformer state_dict (224 px, patch 16,
                       2 layers, 2 heads, width 32, MLP 64)
vit_tiny_reference.pt  inputs and class-token embeddings at 224 px and at 128 px,
                       the latter after torchvision's own positional resampling
scripted_backbone.pt   TorchScript feature extractor (N,3,H,W) -> (N,2560)

Run from this directory: python3 make_fixtures.py
"""

import torch
from torch import nn
from torchvision.models.vision_transformer import VisionTransformer, interpolate_embeddings


def class_token_embedding(model: VisionTransformer, x: torch.Tensor) -> torch.Tensor:
    tokens = model._process_input(x)
    cls = model.class_token.expand(x.shape[0], -1, -1)
    return model.encoder(torch.cat([cls, tokens], dim=1))[:, 0]


def make_vit():
    torch.manual_seed(7)
    cfg = dict(patch_size=16, num_layers=2, num_heads=2, hidden_dim=32, mlp_dim=64)
    vit224 = VisionTransformer(image_size=224, **cfg).eval()
    with torch.no_grad():
        # non-trivial class token and positions so the tests exercise them
        vit224.class_token.normal_(0, 0.5)
        vit224.encoder.pos_embedding.normal_(0, 0.5)
    state = vit224.state_dict()
    # plain dict: the C++ unpickler does not rebuild collections.OrderedDict
    torch.save(dict(state), "vit_tiny.pt")

    vit128 = VisionTransformer(image_size=128, **cfg).eval()
    vit128.load_state_dict(interpolate_embeddings(128, 16, state, interpolation_mode="bicubic"))

    gen = torch.Generator().manual_seed(11)
    x224 = torch.rand(1, 3, 224, 224, generator=gen)
    x128 = torch.rand(1, 3, 128, 128, generator=gen)
    with torch.no_grad():
        ref = {
            "input_224": x224,
            "embed_224": class_token_embedding(vit224, x224),
            "input_128": x128,
            "embed_128": class_token_embedding(vit128, x128),
            "pos_128": vit128.encoder.pos_embedding.detach().clone(),
        }
    torch.save(ref, "vit_tiny_reference.pt")


class ScriptedBackbone(nn.Module):
    def __init__(self, width: int = 2560):
        super().__init__()
        self.stem = nn.Conv2d(3, 8, 3, stride=2, padding=1)
        self.bn = nn.BatchNorm2d(8)
        self.expand = nn.Conv2d(8, width, 1)
        self.pool = nn.AdaptiveAvgPool2d(1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = torch.nn.functional.silu(self.bn(self.stem(x)))
        return self.pool(self.expand(h)).flatten(1)


def make_scripted_backbone():
    torch.manual_seed(3)
    torch.jit.script(ScriptedBackbone().eval()).save("scripted_backbone.pt")


if __name__ == "__main__":
    make_vit()
    make_scripted_backbone()
