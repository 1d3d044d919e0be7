"""Shared fixtures: the desk-scale trained model used by the acceptance suite.

Training takes minutes; export STEREOKIT_TEST_CHECKPOINT=/path/to.snkt to
reuse a previously trained checkpoint (the training recipe below writes
one), or leave it unset to train from scratch inside the session.
"""

import os

import pytest

# Desk-scale training recipe (acceptance criterion scale).
DESK_TRAIN = dict(
    train_pairs=200,
    held_pairs=20,
    width=128,
    height=64,
    max_disp_px=20.0,
    model_max_disp=31,  # D'=4 at K=3; covers [0,20] with (D+1) % 2^K == 0
    channels=32,
    iterations=2000,
    lr0=1e-3,
    decay_rate=0.9,
    decay_steps=150,
    train_seed=42,
    data_seed=1234,
    held_seed=777,
)


def build_desk_datasets():
    from stereokit.dataio import synth_dataset

    train_set = synth_dataset(
        DESK_TRAIN["train_pairs"], DESK_TRAIN["width"], DESK_TRAIN["height"],
        0.0, DESK_TRAIN["max_disp_px"], ("constant", "ramp"), seed=DESK_TRAIN["data_seed"],
    )
    held = synth_dataset(
        DESK_TRAIN["held_pairs"], DESK_TRAIN["width"], DESK_TRAIN["height"],
        0.0, DESK_TRAIN["max_disp_px"], ("constant", "ramp"), seed=DESK_TRAIN["held_seed"],
    )
    return train_set, held


@pytest.fixture(scope="session")
def desk_model():
    from stereokit.pipeline import ModelConfig, StereoModel
    from stereokit.training import TrainConfig, train

    override = os.environ.get("STEREOKIT_TEST_CHECKPOINT", "").strip()
    if override:
        model, _ = StereoModel.load(override)
        return model

    model = StereoModel(
        ModelConfig(
            K=3,
            max_disp=DESK_TRAIN["model_max_disp"],
            channels=DESK_TRAIN["channels"],
            refinement_mode="multi",
            seed=0,
        )
    )
    train_set, _ = build_desk_datasets()
    cfg = TrainConfig(
        iterations=DESK_TRAIN["iterations"],
        lr0=DESK_TRAIN["lr0"],
        decay_rate=DESK_TRAIN["decay_rate"],
        decay_steps=DESK_TRAIN["decay_steps"],
        seed=DESK_TRAIN["train_seed"],
        both_sides=True,
    )
    train(model, train_set, cfg, log_every=200)
    return model


@pytest.fixture(scope="session")
def held_out_pairs():
    _, held = build_desk_datasets()
    return held
