"""What the clipped imitation loss does to a single stored experience."""

# %% imports
import numpy as np

from coil import nn
from coil.imitation import ReplayBatch, ReplayBuffer, imitation_loss, utility

# %% a network whose log pi(a|s) and V(s) are set directly through the output biases
def tiny_net(logp_a, value):
    arch = nn.NetworkArch(1, 2, (1,))
    params = np.zeros(arch.num_params)
    blocks = nn.unpack(params, arch)
    blocks[-3][...] = [-np.log(np.expm1(-logp_a)), 0.0]
    blocks[-1][...] = [value]
    return arch, params


# %% a peer experience worth imitating: its return beats our own value estimate
arch, params = tiny_net(logp_a=-1.2, value=0.4)
batch = ReplayBatch(obs=np.zeros((1, 1)), actions=np.array([0]), returns=np.array([1.0]))
loss, grad, stats = imitation_loss(batch, params, arch, beta_co=0.01)
print(f"utility R - V = {utility(1.0, 0.4):.2f}")
print(f"loss = 1.2 * 0.6 + 0.01 * 0.6^2 / 2 = {loss:.4f}   valid ratio = {stats['valid_ratio']}")

# %% the gradient raises log pi(a|s) and pulls V(s) toward the better return
blocks = nn.unpack(grad, arch)
print("d loss / d policy biases:", np.round(blocks[-3], 4), " d loss / d value bias:", np.round(blocks[-1], 4))

# %% experiences that do not beat V(s) are filtered out entirely
arch, params = tiny_net(logp_a=-1.2, value=1.5)
loss, grad, stats = imitation_loss(batch, params, arch, beta_co=0.01)
print(f"\nwhen V(s)=1.5 > R: loss={loss}, gradient all zero={not grad.any()}, valid ratio={stats['valid_ratio']}")

# %% the replay buffer keeps the newest entries and samples uniformly
buf = ReplayBuffer(capacity=4, obs_dim=2)
for k in range(6):
    buf.add(np.eye(2)[[k % 2]], [k % 5], [0.1 * k])
print("\nbuffer after 6 inserts into capacity 4, returns oldest first:", buf.entries().returns.round(2).tolist())
sample = buf.sample(8, np.random.default_rng(0))
print("uniform minibatch of 8 returns:", sample.returns.round(2).tolist())
