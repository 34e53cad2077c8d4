"""Writes tiny randomly initialised encoder/decoder graphs plus manifest.json.

The graphs only exercise the ONNX plumbing (shapes, input names, prompt
encoding); they do not segment anything meaningful.

    python3 tools/make_smoke_models.py OUT_DIR
"""
import json
import pathlib
import sys

try:
    import onnx  # noqa: F401  (torch.onnx.export needs it)
    import torch
    from torch import nn
except ImportError as e:
    print(f"skipping smoke models: {e}")
    sys.exit(0)


class Encoder(nn.Module):
    def __init__(self, dim):
        super().__init__()
        self.proj = nn.Conv2d(3, dim, 1)

    def forward(self, image):
        return torch.relu(self.proj(image)) + 0.1


class Decoder(nn.Module):
    def __init__(self, dim):
        super().__init__()
        self.head = nn.Conv2d(dim, 3, 1)
        self.up = nn.Upsample(scale_factor=4, mode="nearest")
        self.prior = nn.Conv2d(1, 3, 1)
        self.score = nn.Linear(16 * 3 + 1, 3)

    def forward(self, image_embeddings, point_coords, point_labels, mask_input, has_mask_input):
        # Prompt tensors feed the scores so every input stays in the graph.
        masks = self.up(self.head(image_embeddings)) + self.prior(mask_input)
        prompt = torch.cat([point_coords.reshape(1, 32), point_labels.reshape(1, 16),
                            has_mask_input.reshape(1, 1)], dim=1)
        scores = self.score(prompt)
        return masks, scores


def main(out):
    out = pathlib.Path(out)
    out.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(0)
    seg_dim, ctx_dim = 16, 24
    torch.onnx.export(Encoder(seg_dim), torch.zeros(1, 3, 64, 64), out / "segmenter.onnx",
                      input_names=["image"], output_names=["embeddings"], opset_version=11, dynamo=False)
    torch.onnx.export(Encoder(ctx_dim), torch.zeros(1, 3, 32, 32), out / "context.onnx",
                      input_names=["image"], output_names=["features"], opset_version=11, dynamo=False)
    names = ["image_embeddings", "point_coords", "point_labels", "mask_input", "has_mask_input"]
    args = (torch.zeros(1, seg_dim, 64, 64), torch.zeros(1, 16, 2), torch.zeros(1, 16),
            torch.zeros(1, 1, 256, 256), torch.zeros(1))
    torch.onnx.export(Decoder(seg_dim), args, out / "decoder.onnx", input_names=names,
                      output_names=["low_res_masks", "iou_predictions"], opset_version=11, dynamo=False)
    manifest = {
        "segmenter": {"file": "segmenter.onnx", "input_size": 64, "input": "image", "output": "embeddings"},
        "context": {"file": "context.onnx", "input_size": 32, "input": "image", "output": "features"},
        "decoder": {"file": "decoder.onnx", "mask_input_size": 256, "point_count": 16},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "models/smoke")
