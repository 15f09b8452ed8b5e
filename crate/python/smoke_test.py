"""Smoke test for the protoseg Python extension.

Run after building the extension, e.g.:

    cargo build --release -p protoseg-py
    cp target/release/libprotoseg_py.so python/protoseg.so
    python3 python/smoke_test.py

or install it with `maturin develop -m crates/py/Cargo.toml`.
"""

import tempfile
from pathlib import Path

import protoseg


def main() -> None:
    # two-category toy map: left half one direction, right half another
    h, w, d = 4, 6, 3
    data = []
    for _ in range(h):
        for j in range(w):
            data += [1.0, 0.1, 0.0] if 2 <= j < 4 else [0.1, 1.0, 0.0]
    fm = protoseg.FeatureMap("toy", h, w, d, data)
    assert fm.shape == (h, w, d)
    assert fm.transform("rot90").shape == (w, h, d)

    mask = protoseg.coarse_mask(fm)
    assert mask.shape == (h, w)
    assert mask.get(1, 2) and not mask.get(0, 0), mask.bits()
    assert protoseg.iou(mask, mask) == 1.0
    assert protoseg.mae(mask, mask.complement()) == 1.0
    assert abs(protoseg.f_measure(protoseg.BinaryMask(1, 4, [1, 1, 1, 1]),
                                  protoseg.BinaryMask(1, 4, [1, 1, 0, 0])) - 0.5652) < 1e-4

    record = protoseg.mine(fm, mask)
    assert record is not None and record["image_id"] == "toy"

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        ids = protoseg.synth(str(tmp / "ds"), num_images=20, h=8, w=8, d=12)
        assert len(ids) == 20

        means = protoseg.run_pipeline(str(tmp / "ds" / "fmaps"), str(tmp / "out"),
                                      gt_dir=str(tmp / "ds" / "gt"), top_k=5, workers=2)
        assert means is not None
        mean_mae, mean_iou, mean_f = means
        assert 0.0 <= mean_mae <= 1.0 and 0.0 <= mean_iou <= 1.0 and 0.0 <= mean_f <= 1.0

        fg = protoseg.PrototypeLibrary.read(str(tmp / "out" / "libs" / "fg.plib"))
        bg = protoseg.PrototypeLibrary.read(str(tmp / "out" / "libs" / "bg.plib"))
        assert fg.category == "foreground" and len(fg) == len(bg) > 0

        first = protoseg.FeatureMap.read(str(tmp / "ds" / "fmaps" / f"{ids[0]}.fmap"))
        pred = protoseg.mvkr_mask(first, fg, bg, top_k=5)
        on_disk = protoseg.BinaryMask.read(str(tmp / "out" / "masks" / f"{ids[0]}.pgm"))
        assert pred == on_disk

        label, fg_votes, bg_votes = protoseg.knn_vote(first.feature(0, 0), fg, bg, top_k=5)
        assert fg_votes + bg_votes == 5

        try:
            protoseg.PrototypeLibrary.read(str(tmp / "missing.plib"))
        except FileNotFoundError:
            pass
        else:
            raise AssertionError("missing library should raise FileNotFoundError")

    print(f"protoseg smoke test ok (pipeline mean IoU {mean_iou:.4f})")


if __name__ == "__main__":
    main()
