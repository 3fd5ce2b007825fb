"""LSTM, GRU and CNN-LSTM window classifiers on a burst-attack series."""
import numpy as np

from iomt_detect import detect_seq as ds
from iomt_detect.experiments import ExperimentConfig, dataset_for, prepare_windows
from iomt_detect.nn import TrainConfig

cfg = ExperimentConfig("attack-specific", seed=1, n=1000)
Xtr, ytr, Xte, yte = prepare_windows(dataset_for(cfg), cfg)
print(f"train windows {Xtr.shape}, test windows {Xte.shape}")

for kind in ("LSTM", "GRU", "CNN_LSTM"):
    model = ds.train_sequence_classifier(kind, (Xtr, ytr), TrainConfig(epochs=15, seed=0))
    acc = np.mean(model.flag(Xte) == yte)
    first, final = model.curve[0], model.curve[-1]
    print(f"{kind:<9} loss {first[1]:.3f} -> {final[1]:.3f}   held-out accuracy {acc:.4f}")

logreg = ds.train_logreg((Xtr, ytr), TrainConfig(epochs=30, seed=0))
print(f"{'LogReg':<9} held-out accuracy {np.mean(logreg.flag(Xte) == yte):.4f}")
