# coding: utf-8

# # Baselines: mapped-space cosine and CNN-AvgMax
#
# Neither baseline uses the translation matrix. The cosine ranker compares
# mapped target embeddings with the source embedding; the visual ranker
# averages, over the source word's images, the best cosine to any image of
# the candidate.

# In[1]:

from pathlib import Path

import numpy as np

from bprlex import dataio
from bprlex.baselines import cnn_avgmax, cosine_rank, visual_rank
from bprlex.mapping import MapTrainConfig, SeedPairs, train_linear_map

data = Path(__file__).resolve().parents[1] / "data" / "toy"
emb_F = dataio.load_embeddings(data / "source.vec")
emb_E = dataio.load_embeddings(data / "target.vec")
img_F = dataio.load_image_features(data / "source_images.tsv")
img_E = dataio.load_image_features(data / "target_images.tsv")
dictionary = [(e.source, e.target) for e in dataio.load_dictionary(data / "dictionary.tsv")]


# CNN-AvgMax is not symmetric: two orthogonal images against one.

# In[2]:

two = np.array([[1.0, 0.0], [0.0, 1.0]])
one = np.array([[1.0, 0.0]])
print("avgmax(two, one) =", cnn_avgmax(two, one), " avgmax(one, two) =", cnn_avgmax(one, two))


# Fit a linear map on half of the dictionary and rank the other half.

# In[3]:

half = len(dictionary) // 2
seeds = SeedPairs([(t, s) for s, t in dictionary[:half]])
fit = train_linear_map(seeds, emb_E, emb_F, MapTrainConfig(epochs=50))
candidates = emb_E.words

hits_cos = hits_vis = 0
test = dictionary[half:half + 100]
for s, t in test:
    hits_cos += t in cosine_rank(s, candidates, fit.model, emb_E, emb_F).targets[:10]
    hits_vis += t in visual_rank(s, candidates, img_F, img_E).targets[:10]
print("Acc@10 cosine: %.2f  CNN-AvgMax: %.2f" % (hits_cos / len(test), hits_vis / len(test)))
