import dataclasses

import pytest

from neice import synth
from neice.pipeline import PipelineConfig

ACCEPTANCE_RESULTS = {}


@pytest.fixture
def make_synth(tmp_path):
    """Write a synthetic corpus and return (SynthCorpus, base PipelineConfig)."""
    def factory(preset="planted", seed=0, annotations=True, **overrides):
        spec = dataclasses.replace(synth.PRESETS[preset], seed=seed, **overrides)
        corpus = synth.generate(spec)
        directory = tmp_path / f"{preset}-{seed}-{len(list(tmp_path.iterdir()))}"
        paths = synth.write_synth(corpus, directory)
        if not annotations:
            (directory / "annotations.jsonl").write_text("")
        aw, ae = synth.PRESET_ALPHAS[preset]
        cfg = PipelineConfig(corpus=paths["corpus"], annotations=paths["annotations"],
                             embeddings=paths["embeddings"], k=spec.n_blocks,
                             alpha_word=aw, alpha_ent=ae, seed=seed,
                             output=str(directory / "run"))
        return corpus, cfg
    return factory


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        ok, text = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {text}")
