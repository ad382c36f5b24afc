# coding: utf-8

# # Accuracy against seed lexicon size
#
# The seed translations train the embedding map, so fewer seeds mean worse
# word-embedding aux features. Seed subsets are nested, and the "all" size
# reproduces the full run.

# In[1]:

import tempfile
from pathlib import Path

from bprlex.pipeline import PipelineConfig, cmd_ablate, cmd_split

root = Path(__file__).resolve().parents[1]
cfg = PipelineConfig.load(root / "configs" / "toy" / "BPR_LN.ini")
out = Path(tempfile.mkdtemp(prefix="bprlex-ablation-"))
cfg.paths.update(split_dir=out / "split", models_dir=out / "models", output_dir=out)
cmd_split(cfg)


# BPR_LN scores every word with the aux model on linearly mapped
# embeddings, so the seed size effect shows up directly.

# In[2]:

for size, acc in cmd_ablate(cfg, [10, 25, 50, 100, "all"]):
    print("%4d seeds  Acc@10 = %.3f" % (size, acc))
print((out / "ablation.tsv").read_text(), end="")
