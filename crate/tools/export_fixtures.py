"""Regenerate the LeNet5/MNIST fixtures consumed by the simulator.

Data source: the 10k-digit MNIST sample bundled in the npm `mnist` package
(`npm pack mnist`, version 1.1.0). Pass the extracted `package/src/digits`
directory with --digits.

Outputs (formats documented in README.md):
  lenet5.dcam        model container
  mnist1k.dcds       1000 held-out test samples
  mnist_calib.dcds   further held-out samples for hash-length tuning
  lenet5.ref.json    float64 reference Top-1 on the test samples
"""

import argparse
import json
import struct
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

KIND_CONV2D, KIND_LINEAR, KIND_MAXPOOL = 0, 1, 3
FLAG_BIAS, FLAG_RELU = 0x1, 0x2


def approx_cosine(theta):
    r = torch.where(theta > torch.pi / 2, torch.pi - theta, theta)
    v = torch.where(r <= torch.pi / 3, 1 - r / torch.pi, -0.96 * r + 1.51)
    return torch.where(theta > torch.pi / 2, -v, v)


def hashed_matmul(x, w, k):
    """Differentiable model of x @ w.T as seen through k-bit sign hashing.

    The hamming-distance angle estimate is replaced by the true angle plus
    Gaussian noise of its binomial standard deviation, then passed through
    the piecewise cosine.
    """
    xn = x.norm(dim=1, keepdim=True)
    wn = w.norm(dim=1, keepdim=True)
    cos = (x @ w.t()) / (xn * wn.t()).clamp_min(1e-12)
    theta = torch.acos(cos.clamp(-1 + 1e-6, 1 - 1e-6))
    p = (theta / torch.pi).detach()
    theta = theta + torch.randn_like(theta) * torch.pi * torch.sqrt(p * (1 - p) / k)
    return xn * wn.t() * approx_cosine(theta.clamp(0, torch.pi))


class LeNet5(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 6, 5, padding=2)
        self.conv2 = nn.Conv2d(6, 16, 5)
        self.fc1 = nn.Linear(400, 120)
        self.fc2 = nn.Linear(120, 84)
        self.fc3 = nn.Linear(84, 10)

        self.hash_lengths = None

    def _conv(self, layer, x, k):
        if k is None:
            return layer(x)
        n, _, h, w = x.shape
        kh = layer.kernel_size[0]
        p = layer.padding[0]
        ho, wo = h + 2 * p - kh + 1, w + 2 * p - kh + 1
        patches = F.unfold(x, kh, padding=p).transpose(1, 2).reshape(n * ho * wo, -1)
        out = hashed_matmul(patches, layer.weight.flatten(1), k) + layer.bias
        return out.reshape(n, ho, wo, -1).permute(0, 3, 1, 2)

    def _linear(self, layer, x, k):
        if k is None:
            return layer(x)
        return hashed_matmul(x, layer.weight, k) + layer.bias

    def forward(self, x):
        ks = self.hash_lengths or [None] * 5
        x = F.max_pool2d(F.relu(self._conv(self.conv1, x, ks[0])), 2)
        x = F.max_pool2d(F.relu(self._conv(self.conv2, x, ks[1])), 2)
        x = x.flatten(1)
        x = F.relu(self._linear(self.fc1, x, ks[2]))
        x = F.relu(self._linear(self.fc2, x, ks[3]))
        return self._linear(self.fc3, x, ks[4])


def load_digits(root):
    xs, ys = [], []
    for d in range(10):
        raw = np.asarray(json.loads((root / f"{d}.json").read_text())["data"], dtype=np.float32)
        imgs = raw.reshape(-1, 1, 28, 28)
        xs.append(imgs)
        ys.append(np.full(len(imgs), d, dtype=np.int64))
    return np.concatenate(xs), np.concatenate(ys)


def write_model(path, model):
    out = bytearray(b"DCAM")
    out += struct.pack("<HH", 1, 7)
    out += struct.pack("<III", 1, 28, 28)

    def conv(layer, relu):
        w = layer.weight.detach().numpy().astype("<f4")
        o, i, kh, kw = w.shape
        flags = FLAG_BIAS | (FLAG_RELU if relu else 0)
        rec = struct.pack("<BB", KIND_CONV2D, flags)
        rec += struct.pack("<6I", i, o, kh, kw, layer.stride[0], layer.padding[0])
        rec += w.tobytes() + layer.bias.detach().numpy().astype("<f4").tobytes()
        return rec

    def linear(layer, relu):
        w = layer.weight.detach().numpy().astype("<f4")
        o, i = w.shape
        flags = FLAG_BIAS | (FLAG_RELU if relu else 0)
        rec = struct.pack("<BB", KIND_LINEAR, flags) + struct.pack("<2I", i, o)
        rec += w.tobytes() + layer.bias.detach().numpy().astype("<f4").tobytes()
        return rec

    def maxpool(k, s):
        return struct.pack("<BB", KIND_MAXPOOL, 0) + struct.pack("<2I", k, s)

    out += conv(model.conv1, True) + maxpool(2, 2)
    out += conv(model.conv2, True) + maxpool(2, 2)
    out += linear(model.fc1, True) + linear(model.fc2, True) + linear(model.fc3, False)
    Path(path).write_bytes(bytes(out))


def write_dataset(path, x, y):
    out = bytearray(b"DCDS")
    out += struct.pack("<HHI", 1, 10, len(x))
    out += struct.pack("<III", *x.shape[1:])
    out += x.astype("<f4").tobytes() + y.astype("<u2").tobytes()
    Path(path).write_bytes(bytes(out))


def reference_logits(model, x):
    """Float64 forward pass over the exported f32 weights."""
    m = LeNet5().double()
    m.load_state_dict({k: v.double() for k, v in model.state_dict().items()})
    with torch.no_grad():
        return m(torch.from_numpy(x.astype(np.float64))).numpy()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--digits", type=Path, required=True)
    ap.add_argument("--out", type=Path, default=Path("fixtures"))
    ap.add_argument("--epochs", type=int, default=12)
    ap.add_argument("--hash-aware-epochs", type=int, default=40)
    ap.add_argument("--finetune-lr", type=float, default=1e-3)
    ap.add_argument("--train-hash-lengths", type=int, nargs="+", default=[256])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--test-size", type=int, default=1000)
    ap.add_argument("--calib-size", type=int, default=500)
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(1)

    x, y = load_digits(args.digits)
    perm = np.random.default_rng(args.seed).permutation(len(x))
    x, y = x[perm], y[perm]
    held = args.test_size + args.calib_size
    x_test, y_test = x[: args.test_size], y[: args.test_size]
    x_calib, y_calib = x[args.test_size : held], y[args.test_size : held]
    x_train, y_train = torch.from_numpy(x[held:]), torch.from_numpy(y[held:])

    model = LeNet5()
    opt = torch.optim.Adam(model.parameters(), lr=1e-3)
    g = torch.Generator().manual_seed(args.seed)
    for epoch in range(args.epochs):
        model.train()
        order = torch.randperm(len(x_train), generator=g)
        for i in range(0, len(order), 64):
            idx = order[i : i + 64]
            opt.zero_grad()
            loss = F.cross_entropy(model(x_train[idx]), y_train[idx])
            loss.backward()
            opt.step()
        print(f"epoch {epoch}: loss {loss.item():.4f}")

    # Fine-tune through the hashed forward pass so the weights tolerate the
    # approximation; a fresh projection and random per-layer k for every batch.
    opt = torch.optim.Adam(model.parameters(), lr=args.finetune_lr)
    for epoch in range(args.hash_aware_epochs):
        model.train()
        order = torch.randperm(len(x_train), generator=g)
        for i in range(0, len(order), 64):
            idx = order[i : i + 64]
            pick = torch.randint(len(args.train_hash_lengths), (5,), generator=g)
            model.hash_lengths = [args.train_hash_lengths[j] for j in pick]
            opt.zero_grad()
            loss = F.cross_entropy(model(x_train[idx]), y_train[idx])
            loss.backward()
            opt.step()
        model.hash_lengths = None
        print(f"hash-aware epoch {epoch}: loss {loss.item():.4f}")

    model.eval()
    args.out.mkdir(parents=True, exist_ok=True)
    write_model(args.out / "lenet5.dcam", model)
    write_dataset(args.out / "mnist1k.dcds", x_test, y_test)
    write_dataset(args.out / "mnist_calib.dcds", x_calib, y_calib)

    logits = reference_logits(model, x_test)
    correct = int((logits.argmax(1) == y_test).sum())
    ref = {
        "architecture": "lenet5: conv5x5(6,pad2)+relu, maxpool2, conv5x5(16)+relu, maxpool2, fc400-120+relu, fc120-84+relu, fc84-10",
        "samples": int(len(y_test)),
        "calib_samples": int(len(y_calib)),
        "correct": correct,
        "top1": correct / len(y_test),
        "seed": args.seed,
        "epochs": args.epochs,
        "hash_aware_epochs": args.hash_aware_epochs,
        "finetune_lr": args.finetune_lr,
        "train_hash_lengths": args.train_hash_lengths,
    }
    (args.out / "lenet5.ref.json").write_text(json.dumps(ref, indent=2) + "\n")
    print(json.dumps(ref, indent=2))


if __name__ == "__main__":
    main()
