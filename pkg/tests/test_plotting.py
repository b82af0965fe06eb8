import numpy as np
import pytest
from PIL import Image

from drive_curate.evalmetrics import EvalRecord, bucketed_report
from drive_curate.plotting import plot_bucket_report, plot_examples, plot_loss_curve


def _report():
    recs = [EvalRecord("a", "0", 10.0, 20.0, 0.5, 1.0), EvalRecord("a", "1", 100.0, 15.0, 0.3, 0.8)]
    return bucketed_report(recs)


def test_bucket_figure_is_png_and_repeatable(tmp_path):
    a = plot_bucket_report(_report(), tmp_path / "a.png")
    b = plot_bucket_report(_report(), tmp_path / "b.png")
    assert Image.open(a).format == "PNG"
    assert a.read_bytes() == b.read_bytes()


def test_loss_curve(tmp_path):
    steps = np.arange(100)
    p = plot_loss_curve(steps, 100.0 / (1 + steps), tmp_path / "sub" / "loss.png")
    assert p.exists() and Image.open(p).size[0] > 100


def test_examples_grid(tmp_path):
    img = np.random.default_rng(0).random((16, 16, 3))
    p = plot_examples([[img, img, img], [img, img]], tmp_path / "ex.png")
    assert Image.open(p).format == "PNG"
    with pytest.raises(ValueError):
        plot_examples([], tmp_path / "none.png")
