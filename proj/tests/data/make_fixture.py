"""Builds the small DenseNet-shaped ONNX graph and golden pairs used by the
feature-extraction parity tests.

The graph keeps the backbone contract: input `input` (N,3,128,128), output
`features` (N,1920,4,4), dynamic batch. It uses the same operator set as
DenseNet201 (Conv, BatchNormalization, Relu, MaxPool, AveragePool, Concat).
Outputs come from PyTorch and are cross-checked with onnxruntime.

    python3 tests/data/make_fixture.py tests/data
"""

import hashlib
import json
import pathlib
import sys

import numpy as np
import torch
from torch import nn


class DenseLayer(nn.Module):
    def __init__(self, cin, growth):
        super().__init__()
        self.bn = nn.BatchNorm2d(cin)
        self.conv = nn.Conv2d(cin, growth, 3, padding=1, bias=False)

    def forward(self, x):
        return torch.cat([x, self.conv(torch.relu(self.bn(x)))], 1)


class Transition(nn.Module):
    def __init__(self, cin, cout):
        super().__init__()
        self.bn = nn.BatchNorm2d(cin)
        self.conv = nn.Conv2d(cin, cout, 1, bias=False)
        self.pool = nn.AvgPool2d(2, 2)

    def forward(self, x):
        return self.pool(self.conv(torch.relu(self.bn(x))))


class TinyDense(nn.Module):
    def __init__(self):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(3, 8, 7, stride=2, padding=3, bias=False),
            nn.BatchNorm2d(8),
            nn.ReLU(),
            nn.MaxPool2d(3, stride=2, padding=1),
        )
        self.block1 = nn.Sequential(DenseLayer(8, 4), DenseLayer(12, 4))
        self.trans1 = Transition(16, 8)
        self.block2 = nn.Sequential(DenseLayer(8, 4), DenseLayer(12, 4))
        self.trans2 = Transition(16, 12)
        self.head = nn.Conv2d(12, 1920, 1, bias=True)
        self.norm = nn.BatchNorm2d(1920)

    def forward(self, x):
        x = self.stem(x)  # 32x32
        x = self.trans1(self.block1(x))  # 16x16
        x = self.trans2(self.block2(x))  # 8x8
        x = nn.functional.avg_pool2d(x, 2)  # 4x4
        return torch.relu(self.norm(self.head(x)))


def randomize_bn(model, gen):
    for m in model.modules():
        if isinstance(m, nn.BatchNorm2d):
            n = m.num_features
            m.weight.data = torch.rand(n, generator=gen) + 0.5
            m.bias.data = torch.rand(n, generator=gen) - 0.5
            m.running_mean = torch.rand(n, generator=gen) - 0.5
            m.running_var = torch.rand(n, generator=gen) + 0.5


def sha256(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def main(out_dir):
    out = pathlib.Path(out_dir)
    gold = out / "goldens"
    gold.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(7)
    gen = torch.Generator().manual_seed(7)
    model = TinyDense().eval()
    randomize_bn(model, gen)

    onnx_path = out / "tiny_backbone.onnx"
    torch.onnx.export(
        model,
        torch.zeros(1, 3, 128, 128),
        str(onnx_path),
        input_names=["input"],
        output_names=["features"],
        dynamic_axes={"input": {0: "N"}, "features": {0: "N"}},
        opset_version=13,
        do_constant_folding=False,
        dynamo=False,
    )

    import onnxruntime as ort

    sess = ort.InferenceSession(str(onnx_path), providers=["CPUExecutionProvider"])
    rng = np.random.default_rng(7)
    inputs = [rng.standard_normal((3, 128, 128)).astype(np.float32) for _ in range(3)]
    inputs.append(np.zeros((3, 128, 128), np.float32))
    index = {"model": onnx_path.name, "model_sha256": sha256(onnx_path), "pairs": []}
    for i, x in enumerate(inputs):
        with torch.no_grad():
            y = model(torch.from_numpy(x)[None]).numpy()[0]
        y_ort = sess.run(["features"], {"input": x[None]})[0][0]
        diff = float(np.abs(y - y_ort).max())
        assert diff < 1e-4, diff
        xi, yo = gold / f"input_{i:02d}.npy", gold / f"output_{i:02d}.npy"
        np.save(xi, x)
        np.save(yo, y.astype(np.float32))
        index["pairs"].append(
            {"input": xi.name, "output": yo.name, "input_sha256": sha256(xi), "output_sha256": sha256(yo),
             "onnxruntime_max_abs_diff": diff}
        )
    (gold / "index.json").write_text(json.dumps(index, indent=2) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else pathlib.Path(__file__).parent)
