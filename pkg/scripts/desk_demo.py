"""Desk-scale end-to-end run: train small models, then adapt a 15 s clip.

Trains a reduced 6-block ARP on synthetic ambient clips and the ETV model on
the shipped study corpus, writes both into models/, and runs the pipeline
through configs/example.yaml.  The ARP here only learns a toy
loudness/brightness mapping; real use needs a DeLTA-style manifest.
"""

import argparse
import json
import time
from pathlib import Path

import numpy as np

from voiceadapt import arp, etv, nn
from voiceadapt.corpus import load_shipped_corpus, synthetic_ambient_clips
from voiceadapt.pipeline import Pipeline, load_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--models", type=Path, default=ROOT / "models")
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "example.yaml")
    ap.add_argument("--arp-epochs", type=int, default=60)
    args = ap.parse_args()
    args.models.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(0)
    labels = rng.uniform(1.5, 9.5, 32)
    clips = synthetic_ambient_clips(labels, n_frames=64, seed=1)
    cfg = arp.ArpConfig(block_filter_counts=(4, 8, 12, 16, 24, 32), embedding_dim=64, dropout_p=0.0,
                        epochs=args.arp_epochs, batch_size=8)
    x = arp.stack_features([arp.clip_features(c, cfg.features) for c in clips], 64)
    t0 = time.perf_counter()
    w_arp, hist = arp.train_arp_arrays(x[:24], labels[:24], cfg, x[24:], labels[24:])
    mse, mae = arp.regression_metrics(w_arp, x[24:], labels[24:])
    print(json.dumps({"model": "arp", "val_mse": mse, "val_mae": mae, "seconds": time.perf_counter() - t0}))
    nn.save_weights(w_arp, args.models / "arp.weights")

    t0 = time.perf_counter()
    w_etv, m = etv.train_etv(load_shipped_corpus())
    print(json.dumps({"model": "etv", "holdout_mse": m.holdout_mse, "seconds": time.perf_counter() - t0}))
    nn.save_weights(w_etv, args.models / "etv.weights")

    pipe = Pipeline(load_config(args.config))
    clip = synthetic_ambient_clips([7.0], n_frames=483, seed=2)[0]
    rep = pipe.adapt(clip, distance_cm=300.0, room="meeting_room", name="synthetic-15s")
    print(json.dumps(rep.to_dict()))


if __name__ == "__main__":
    main()
