"""
Training the enhancement network on a small synthetic set
=========================================================

Cut HQ crops from bundled photographs, darken each ten ways, train for a
thousand iterations and compare held-out scores before and after.
Expect a few minutes on one core; raise ``ITERS`` for better results.

    python demos/plot_train_small.py out/train 1000
"""
import sys
import time
from pathlib import Path

from msrnet.data import build_patch_dataset, read_image, synthesize_dataset, write_image
from msrnet.metrics import evaluate
from msrnet.model import MsrNet, MsrNetConfig
from msrnet.nn import TrainConfig, train_loop
from msrnet.sample_images import make_hq_corpus

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/train")
ITERS = int(sys.argv[2]) if len(sys.argv) > 2 else 1000

###############################################################################
# Data: 20 HQ crops, 10 darkened copies each, split 80/20 by source crop.

make_hq_corpus(out / "hq", count=20, size=96, seed=0)
summary = synthesize_dataset(out / "hq", out / "ds", per_image=10, seed=0)
train = [p for p in summary.pairs if p.split == "train"]
test = [p for p in summary.pairs if p.split == "test"]
patches = build_patch_dataset(train, patch=32, per_pair=4, seed=0)
print(f"{len(train)} train / {len(test)} test pairs, {len(patches)} patches")

###############################################################################
# Model: the default architecture, trained with Adam at lr 1e-4.

net = MsrNet(MsrNetConfig(), seed=0)
cfg = TrainConfig(max_iters=ITERS, batch=8, lr_drop_iters=[], seed=0)
t0 = time.time()
res = train_loop(net, patches, cfg, log_every=0, out_dir=out / "run")
print(f"{ITERS} iterations in {time.time() - t0:.0f} s, "
      f"loss {res.losses[0]:.1f} -> {res.losses[-1]:.2f}")

###############################################################################
# Held-out scores for the darkened inputs and for the network output.

before = evaluate(test, lambda p: read_image(p.ll_path)).aggregate
after = evaluate(test, lambda p: net.enhance(read_image(p.ll_path))).aggregate
for name, agg in (("input", before), ("enhanced", after)):
    print(f"{name:9s} ssim {agg['ssim']:.3f}  entropy {agg['entropy']:.2f}  "
          f"angular {agg['angular_deg']:.2f} deg")

sample = test[0]
write_image(out / "sample_input.png", read_image(sample.ll_path))
write_image(out / "sample_output.png", net.enhance(read_image(sample.ll_path)))
