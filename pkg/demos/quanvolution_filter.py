"""A trainable quantum filter sliding over a 14x14 image.

Each 4x4 patch is packed into 4 qubits (four pixels per qubit), run through
three parametric layers and read out as four <Z> channels.
"""
import numpy as np

from qhybrid.datasets import synth_dataset
from qhybrid.quanvolution import QuantumFilter, execution_count, extract_patches, quanv_backward, quanv_forward

rng = np.random.default_rng(0)
data = synth_dataset(3, 3, seed=1)
image = data.images[0]

filt = QuantumFilter.random(rng)
print(f"filter: {filt.num_qubits} qubits, {filt.theta.size} parameters, kernel {filt.kernel_size} stride {filt.stride}")

patches = extract_patches(image, filt.kernel_size, filt.stride)
print("patches:", patches.shape)

fmap = quanv_forward(filt, image)
print(f"feature map: {fmap.height_out}x{fmap.width_out}x{fmap.channels}")
print("channel 0:\n", np.round(fmap.values[..., 0], 3))

# gradient of sum(feature map) w.r.t. the 24 filter parameters
upstream = np.ones_like(fmap.values)
grad = quanv_backward(filt, image, upstream)
print("d(sum)/d(theta)[:6]:", np.round(grad[:6], 4))

print("circuit executions per image:")
print("  frozen filter, 28x28:", execution_count(28, 28, 4, 4, 0, trainable=False))
print("  trainable, 10 params:", execution_count(28, 28, 4, 4, 10))
print("  trainable, one batch of 50:", execution_count(28, 28, 4, 4, 10, batch=50))
print("  this filter on 14x14 (24 params):", execution_count(14, 14, 4, 4, 24))
