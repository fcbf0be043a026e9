"""A small Monte Carlo cross-validation on phantoms.

Each subject has three oracle opinions with scale-typical mistakes: the fine
one adds false positives, the coarse one blurs and misses small lesions.
Ensembles are trained separately for small and large lesions.
"""
from lesion_ensemble import PhantomSpec
from lesion_ensemble.experiment import XvalConfig, aggregate, format_report, run_xval

cfg = XvalConfig(n_subjects=8, repeats=2, train_fraction=0.75, seed=1,
                 phantom=PhantomSpec(dims=(40, 56, 40)), via_patches=False)
records, training = run_xval(cfg)
print(format_report(cfg.to_dict(), aggregate(records)))
