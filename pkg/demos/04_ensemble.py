"""Training the three-weight fusion layer on opinions of known quality.

The second opinion is the ground truth; the other two are salt noise. With a
SinAct output, gradient descent on the soft Dice loss shifts the weight onto
the reliable opinion.
"""
import numpy as np

from lesion_ensemble import OpinionSet, PhantomSpec, TrainConfig, dsc, fuse, generate_phantom, threshold, train_ensemble

rng = np.random.default_rng(0)
sets = []
for seed in range(6):
    _, gt = generate_phantom(PhantomSpec(seed=seed))
    noise = [gt.with_data((rng.random(gt.dims) < 0.3).astype(float)) for _ in range(2)]
    sets.append(OpinionSet(noise[0], gt, noise[1], gt=gt))

for act in ("Sigmoid", "SinAct"):
    model, history = train_ensemble(sets[:5], TrainConfig(epochs=10), act)
    score = dsc(threshold(fuse(sets[5], model)), sets[5].gt)
    print(f"{act:>7}: weights {np.round(model.weights, 3)}, loss {history[0]:.4f} -> {history[-1]:.4f}, "
          f"held-out Dice {score:.4f}")
