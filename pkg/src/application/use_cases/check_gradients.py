from __future__ import annotations

import logging
import time
from dataclasses import dataclass

from src.domain.services.gradient_check_service import GradCheckResult, GradientCheckService
from src.infrastructure.storage.run_storage import RunStorage

logger = logging.getLogger(__name__)


@dataclass
class CheckGradientsUseCase:
    runs: RunStorage | None = None

    def execute(
        self, instances: int = 50, seed: int = 0
    ) -> tuple[list[GradCheckResult], str]:
        """Run the finite-difference suite; returns the results and a pass/fail table."""
        started = time.perf_counter()
        results = GradientCheckService.run(instances=instances, seed=seed)
        logger.info("Gradient suite finished in %.1fs", time.perf_counter() - started)
        rows = [
            [r.name, str(r.instances), str(r.passed), "PASS" if r.ok else "FAIL"] for r in results
        ]
        table = RunStorage.render_table(
            "Finite-difference gradient checks",
            ["function", "instances", "passed", "status"],
            rows,
        )
        if self.runs is not None:
            self.runs.path("losscheck.txt").write_text(table, encoding="utf-8")
            self.runs.write_json(
                "losscheck.json",
                [{"name": r.name, "instances": r.instances, "passed": r.passed} for r in results],
            )
        return results, table
