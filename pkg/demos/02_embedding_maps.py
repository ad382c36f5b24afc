# coding: utf-8

# # Mapping target embeddings into the source space
#
# Both maps are fitted by per-pair SGD on seed translations. The linear map
# is a single matrix W with x_e W close to x_f; the tanh network stacks four
# bias-free layers.

# In[1]:

import numpy as np

from bprlex import (FeatureStore, MapTrainConfig, SeedPairs, apply_map, build_word_aux_store,
                    train_linear_map, train_nn_map)

rng = np.random.default_rng(0)
d = 20
W_true = rng.normal(size=(d, d)) / np.sqrt(d)
X_E = rng.normal(size=(600, d))
X_F = X_E @ W_true + 0.05 * rng.normal(size=(600, d))

emb_E = FeatureStore("we", d, {f"t{i}": v for i, v in enumerate(X_E)})
emb_F = FeatureStore("we", d, {f"s{i}": v for i, v in enumerate(X_F)})
seeds = SeedPairs([(f"t{i}", f"s{i}") for i in range(500)])


# ## Linear map

# In[2]:

fit = train_linear_map(seeds, emb_E, emb_F, MapTrainConfig(epochs=50))
err = np.linalg.norm(fit.model.W - W_true) / np.linalg.norm(W_true)
print("loss %.4f -> %.4f, relative error of W %.3f" % (fit.initial_loss, fit.final_loss, err))


# The 100 words left out of the seeds are retrieved by cosine in source space.

# In[3]:

mapped_store, source_store = build_word_aux_store(fit.model, emb_E, emb_F)
M = mapped_store.matrix([f"t{i}" for i in range(500, 600)])
F = source_store.matrix([f"s{i}" for i in range(500, 600)])
cos = (M / np.linalg.norm(M, axis=1, keepdims=True)) @ (F / np.linalg.norm(F, axis=1, keepdims=True)).T
print("held-out P@1: %.2f" % np.mean(cos.argmax(axis=1) == np.arange(100)))


# ## Four-layer tanh map
#
# Hidden sizes are configurable; small ones keep this demo fast. The same
# helper turns it into word-embedding aux features.

# In[4]:

small = SeedPairs(seeds.pairs[:100])
nn_fit = train_nn_map(small, emb_E, emb_F, MapTrainConfig(epochs=100, hidden=(64, 64, 64)))
print("tanh map loss %.4f -> %.4f" % (nn_fit.initial_loss, nn_fit.final_loss))
print("mapped vector shape:", apply_map(nn_fit.model, X_E[0]).shape)
