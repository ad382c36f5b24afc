# coding: utf-8

# # Translation as matrix completion
#
# Rows of the matrix are target words, columns are source words, and an
# observed cell means "f translates to e". We plant a low-rank score matrix,
# observe its top 5% of cells, hide a fifth of those, and check that BPR
# matrix factorization ranks the hidden cells above unobserved ones.

# In[1]:

import numpy as np

from bprlex import (Provenance, TrainConfig, TranslationGraph, TranslationPair,
                    Vocabulary, score_mf, train_mf)
from bprlex.synthetic import planted_matrix

pm = planted_matrix(n_targets=200, n_sources=150, k=5, seed=0)
print("observed cells:", len(pm.observed), " train:", len(pm.train), " held out:", len(pm.held_out))


# The training graph only sees the training cells. Every cell carries a
# provenance tag; here they are all WIKI.

# In[2]:

targets = Vocabulary("target", [f"e{i}" for i in range(200)])
sources = Vocabulary("source", [f"f{i}" for i in range(150)])
graph = TranslationGraph(targets, sources,
                         [TranslationPair(int(e), int(f), Provenance.WIKI) for e, f in pm.train])


# Train with the default settings: k=50, 100 epochs, one pass over the
# observed cells per epoch. The log holds the mean triple objective
# ln sigmoid(x_ef - x_eg) on a fixed probe set after each epoch.

# In[3]:

cfg = TrainConfig()
factors, log = train_mf(graph, None, cfg)
print("objective: %.4f at init, %.4f after %d epochs"
      % (log.initial_objective, log.objective[-1], len(log.objective)))


# Held-out AUC against random unobserved targets of the same source.

# In[4]:

S = factors.P @ factors.Q.T
observed = np.zeros(S.shape, dtype=bool)
observed[pm.observed[:, 0], pm.observed[:, 1]] = True
rng = np.random.default_rng(1)
wins = []
for e, f in pm.held_out:
    neg = rng.choice(np.flatnonzero(~observed[:, f]), size=100)
    wins.append(np.mean(S[e, f] > S[neg, f]))
print("held-out AUC: %.3f" % np.mean(wins))


# A single score is just a dot product of the two factor rows.

# In[5]:

e, f = pm.held_out[0]
print("x_ef for a held-out pair:", round(score_mf(factors, int(e), int(f)), 4))
