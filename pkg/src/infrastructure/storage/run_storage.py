from __future__ import annotations

import json
import logging
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.application.dtos.report_dto import AblationTable, MetricReport  # noqa: E402

logger = logging.getLogger(__name__)


def dumps_stable(payload: Any, indent: int | None = 2) -> str:
    """Byte-stable JSON: sorted keys, fixed separators, trailing newline."""
    separators = (",", ": ") if indent else (",", ":")
    return json.dumps(payload, sort_keys=True, indent=indent, separators=separators) + "\n"


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{100.0 * value:.2f}"


class RunStorage:
    """Output directory of one CLI run: config echo, logs, reports, tables and figures."""

    def __init__(self, out_dir: str | Path) -> None:
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def write_json(self, name: str, payload: Any) -> Path:
        path = self.path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps_stable(payload), encoding="utf-8")
        return path

    def write_config(self, config: dict[str, Any], config_hash: str) -> Path:
        return self.write_json("config.json", {"config": config, "config_hash": config_hash})

    def reset_jsonl(self, name: str) -> Path:
        path = self.path(name)
        path.write_text("", encoding="utf-8")
        return path

    def append_jsonl(self, name: str, record: dict[str, Any]) -> None:
        with self.path(name).open("a", encoding="utf-8") as fh:
            fh.write(dumps_stable(record, indent=None))

    def read_jsonl(self, name: str) -> list[dict[str, Any]]:
        text = self.path(name).read_text(encoding="utf-8")
        return [json.loads(line) for line in text.splitlines() if line.strip()]

    # --------- reports ---------
    @staticmethod
    def render_table(title: str, header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
        widths = [max(len(str(c)) for c in col) for col in zip(header, *rows, strict=True)]

        def line(cells: Sequence[str]) -> str:
            return "  ".join(str(c).rjust(w) for c, w in zip(cells, widths, strict=True))

        rule = "-" * len(line(header))
        return "\n".join([title, rule, line(header), rule, *(line(r) for r in rows), rule]) + "\n"

    @staticmethod
    def metric_table(report: MetricReport) -> str:
        rows = [
            ["mIoU", _fmt(report.seen_miou), _fmt(report.unseen_miou), _fmt(report.harmonic_miou)],
            [
                "Boundary IoU",
                _fmt(report.boundary_seen_miou),
                _fmt(report.boundary_unseen_miou),
                _fmt(report.boundary_harmonic_miou),
            ],
            [
                "Recall",
                _fmt(report.seen_recall),
                _fmt(report.unseen_recall),
                _fmt(report.harmonic_recall),
            ],
        ]
        title = f"{report.protocol} ({report.num_samples} images)"
        return RunStorage.render_table(title, ["", "Seen", "Unseen", "Harmonic"], rows)

    @staticmethod
    def ablation_table(table: AblationTable) -> str:
        rows = [
            [
                r.label,
                _fmt(r.seen),
                _fmt(r.unseen),
                _fmt(r.harmonic),
                _fmt(r.dot_iou),
                _fmt(r.overlap_fraction),
            ]
            for r in table.rows
        ]
        header = ["", "Seen", "Unseen", "Harmonic", "Small part", "Overlap"]
        return RunStorage.render_table(table.title, header, rows)

    def write_report(self, report: MetricReport, stem: str) -> Path:
        self.path(f"{stem}.txt").write_text(self.metric_table(report), encoding="utf-8")
        return self.write_json(f"{stem}.json", report.model_dump(mode="json", by_alias=True))

    def write_ablation(self, table: AblationTable, stem: str) -> Path:
        self.path(f"{stem}.txt").write_text(self.ablation_table(table), encoding="utf-8")
        self.save_ablation_figure(table, f"{stem}.png")
        return self.write_json(f"{stem}.json", table.model_dump(mode="json"))

    # --------- figures ---------
    def _save(self, fig, name: str) -> Path:
        path = self.path(name)
        fig.savefig(path, dpi=100, metadata={"Software": None})
        plt.close(fig)
        return path

    def save_ablation_figure(self, table: AblationTable, name: str) -> Path:
        labels = [r.label for r in table.rows]
        x = np.arange(len(labels))
        fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(labels)), 3.0))
        for offset, key in ((-0.25, "seen"), (0.0, "unseen"), (0.25, "harmonic")):
            values = [getattr(r, key) or 0.0 for r in table.rows]
            ax.bar(x + offset, values, width=0.25, label=key.capitalize())
        ax.set_xticks(x, labels)
        ax.set_ylim(0.0, 1.0)
        ax.set_title(table.title)
        ax.legend(fontsize="small")
        fig.tight_layout()
        return self._save(fig, name)

    def save_inference_figure(
        self,
        image: np.ndarray,
        prediction: np.ndarray,
        num_classes: int,
        attention: np.ndarray | None,
        attention_title: str,
        name: str,
    ) -> Path:
        panels = 3 if attention is not None else 2
        fig, axes = plt.subplots(1, panels, figsize=(3.0 * panels, 3.0))
        axes[0].imshow(image)
        axes[0].set_title("input")
        axes[1].imshow(
            prediction, cmap="tab20", vmin=0, vmax=max(num_classes, 1), interpolation="nearest"
        )
        axes[1].set_title("prediction")
        if attention is not None:
            axes[2].imshow(attention, cmap="viridis", vmin=0.0, vmax=1.0)
            axes[2].set_title(attention_title)
        for ax in axes:
            ax.axis("off")
        fig.tight_layout()
        return self._save(fig, name)
