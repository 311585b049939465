"""Quick end-to-end check of the bindings: synthesize, extract, train, score."""

import pyvocodet as v

assert abs(v.hz_to_mel(1000.0) - 999.99) < 0.01

tones = [v.AudioClip.synth("harmonic", 1.0, 16000, freq=100.0 + 10 * i) for i in range(6)]
noise = [v.AudioClip.synth("shaped_noise", 1.0, 16000, seed=i) for i in range(6)]
feats_real = [v.extract_features(c) for c in tones]
feats_fake = [v.extract_features(c) for c in noise]
assert feats_real[0].dim == 60

frames = lambda fs: [row for f in fs[:4] for row in f.stacked()]
real = v.GmmModel.train(frames(feats_real), 4, epochs=5, learning_rate=0.05)
fake = v.GmmModel.train(frames(feats_fake), 4, epochs=5, learning_rate=0.05)
det = v.Detector(real, fake)

scores_real = [det.score(f) for f in feats_real[4:]]
scores_fake = [det.score(f) for f in feats_fake[4:]]
eer, _ = v.compute_eer(scores_real, scores_fake)
print(f"held-out scores real {scores_real}, fake {scores_fake}, EER {eer}")
assert eer == 0.0

phone = v.simulate_phone(tones[0], mu_law=True)
assert phone.sample_rate == 16000

model, history = v.GmmModel.train_em(frames(feats_real), 2, iterations=5)
assert all(b >= a - 1e-9 * abs(a) for a, b in zip(history, history[1:]))

attr = v.blur_ig(det, feats_real[5], steps=50)
assert attr["completeness_residual"] < 0.05

try:
    v.extract_features(tones[0], kind="plp")
except v.VocodetError as e:
    print("rejected unknown kind:", e)
else:
    raise AssertionError("unknown kind accepted")

print("smoke test passed")
