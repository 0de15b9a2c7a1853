#!/usr/bin/env python3
"""Derivation run behind the pinned ablation margins in tests/test_acceptance.py.

Trains the fixture velocity net on the shape distribution, sweeps schedule
placements and projection modes on the 20-image fixture, and prints the mean
PSNR per variant plus the A-dagger baselines.  Run it whenever the fixture
definition changes and re-pin the margins.
"""

import sys
import time

import numpy as np

sys.path.insert(0, "src")

from flowsteer import (
    Blur,
    Colorization,
    FlowSteerConfig,
    RestorationTask,
    SuperRes4,
    TimeGrid,
    TrainConfig,
    dataset_sampler,
    evaluate_restoration,
    identity_codec,
    net_init,
    preset_schedule,
    rect_schedule,
    restore_flowsteer,
    train,
    velocity_field,
)
from flowsteer.datasets import derive_seed, gen_shape_dataset

SIZE = 16
DIMS = (3, SIZE, SIZE)
N_STEPS = 30
TRAIN_STEPS = int(sys.argv[1]) if len(sys.argv) > 1 else 6000
HIDDEN = [128, 128]


def train_fixture_net():
    t0 = time.time()
    images = np.stack(gen_shape_dataset(400, SIZE, seed=100))
    net = net_init(int(np.prod(DIMS)), HIDDEN, 8, seed=7)
    losses = train(
        net,
        dataset_sampler(images),
        TrainConfig(steps=TRAIN_STEPS, batch_size=64, learning_rate=1e-3, momentum=0.9, seed=0),
    )
    print(f"trained {TRAIN_STEPS} steps in {time.time()-t0:.1f}s; "
          f"loss {losses[0]:.3f} -> {losses[-1]:.3f}")
    w = losses.reshape(-1, 100).mean(axis=1)
    rel = np.diff(w) / w[:-1]
    print(f"loss windows: max rel increase {rel.max():.4f}, ups {(rel>0).sum()}/{len(rel)}")
    return net, losses


def run_variant(net, images, op, schedule, eta_eff, mode, seeds=range(5)):
    field = velocity_field(net)
    codec = identity_codec(DIMS)
    cfg = FlowSteerConfig(
        grid=TimeGrid.uniform(N_STEPS), schedule=schedule, codec=codec,
        eta_eff=eta_eff, projection_mode=mode,
    )
    scores = []
    for s in seeds:
        for i, gt in enumerate(images):
            y = op.apply(gt)
            task = RestorationTask(op, y, ground_truth=gt)
            rng = np.random.default_rng(derive_seed(s, i, 2))
            x_hat, _ = restore_flowsteer(field, task, cfg, rng)
            scores.append(evaluate_restoration(op, x_hat, y, gt).psnr)
    return float(np.mean(scores))


def main():
    net, _ = train_fixture_net()
    images = gen_shape_dataset(20, SIZE, seed=0)

    print("\n-- criterion 7: schedule placement on colorization, eta_eff=0.05 --")
    op = Colorization(DIMS)
    mid = rect_schedule(N_STEPS, 15, 27, 1.0)
    early = rect_schedule(N_STEPS, 1, 12, 1.0)
    ones = rect_schedule(N_STEPS, 1, 30, 1.0)
    t0 = time.time()
    p_mid = run_variant(net, images, op, mid, 0.05, "direct")
    p_early = run_variant(net, images, op, early, 0.05, "direct")
    p_ones = run_variant(net, images, op, ones, 0.05, "direct")
    p_viax0 = run_variant(net, images, op, mid, 0.05, "via_x0")
    print(f"  mid [15,27]:   {p_mid:.3f} dB")
    print(f"  early [1,12]:  {p_early:.3f} dB   margin mid-early: {p_mid-p_early:+.3f}")
    print(f"  all-ones:      {p_ones:.3f} dB   margin mid-ones:  {p_mid-p_ones:+.3f}")
    print(f"  via_x0 (mid):  {p_viax0:.3f} dB  margin direct-via_x0: {p_mid-p_viax0:+.3f}")
    print(f"  ({time.time()-t0:.1f}s for 400 runs)")

    print("\n-- criterion 8: general preset vs A-dagger baseline, eta_eff=0 --")
    general = preset_schedule("general", N_STEPS)
    for op in (SuperRes4(DIMS), Blur(DIMS, sigma_b=1.5, wiener_lambda=0.1)):
        base = float(np.mean([
            evaluate_restoration(op, op.apply_pinv(op.apply(g)), op.apply(g), g).psnr
            for g in images
        ]))
        score = run_variant(net, images, op, general, 0.0, "direct", seeds=range(5))
        print(f"  {op.kind}: flow {score:.3f} dB vs pinv {base:.3f} dB  margin {score-base:+.3f}")


if __name__ == "__main__":
    main()
