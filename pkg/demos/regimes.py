"""Print the regime, critical dimensions and hypothesis checks of every preset."""
from branchsim.config import PRESET_NAMES, preset_model
from branchsim.model import classify_regime, hypothesis_checks

for name in PRESET_NAMES:
    model = preset_model(name)
    info = classify_regime(model)
    hyp = ", ".join(f"{k}={'ok' if ok else 'FAIL'}" for k, (ok, _) in hypothesis_checks(model).items())
    print(f"{name:24s} {info.regime:10s} threshold={info.dims.threshold:.4f}  beta={model.spectral.beta}  {hyp}")
