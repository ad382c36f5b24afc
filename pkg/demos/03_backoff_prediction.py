# coding: utf-8

# # Back-off prediction on the toy language pair
#
# The toy pair in data/toy plants three kinds of source words: ones with
# WIKI links, ones with at least two WIKI+CROWD links, and cold words with
# neither. Each kind is scored by its own model: MF trained on WIKI, MF
# trained on WIKI+CROWD, or the auxiliary-feature model.
#
# This demo runs the same steps as the command line tool, with every output
# redirected to a temporary directory.

# In[1]:

import tempfile
from pathlib import Path

from bprlex import dataio
from bprlex.pipeline import (PipelineConfig, cmd_evaluate, cmd_predict, cmd_split, cmd_train)

root = Path(__file__).resolve().parents[1]
cfg = PipelineConfig.load(root / "configs" / "toy" / "BPR_VIS.ini")
out = Path(tempfile.mkdtemp(prefix="bprlex-demo-"))
cfg.paths.update(split_dir=out / "split", models_dir=out / "models", output_dir=out)

manifest = cmd_split(cfg)
print(manifest["n_test"], "test words,", manifest["n_seeds"], "seed pairs")


# Train the two MF models, the tanh map, and the two aux scorers. The
# word-embedding scorer reads the map checkpoint written just before it.

# In[2]:

for name in ("mf-w", "mf-wc", "map-nn", "aux-we", "aux-vis"):
    path = cmd_train(cfg, name)
    print("%-8s -> %s (%d bytes)" % (name, path.name, path.stat().st_size))


# Predict. The tier column says which model handled each word.

# In[3]:

print("tier counts:", cmd_predict(cfg))
ranked = dataio.load_predictions(cfg.predictions_path)
for source in list(ranked)[:3]:
    r = ranked[source]
    print(source, r.tier, r.targets[:5])


# Acc@k overall and per tier.

# In[4]:

report = cmd_evaluate(cfg)
for tier, accs, n in report.rows:
    print("%-6s n=%3d  " % (tier, n) + "  ".join("acc@%d=%.3f" % kv for kv in accs.items()))
