from xaer.agents.dqn import DQNAgent, DQNConfig
from xaer.agents.nn import Adam, DenseNet, net_backward, net_forward
from xaer.agents.sac import SACAgent, SACConfig
from xaer.agents.td3 import TD3Agent, TD3Config

__all__ = [
    "Adam", "DQNAgent", "DQNConfig", "DenseNet", "SACAgent", "SACConfig", "TD3Agent", "TD3Config",
    "net_backward", "net_forward",
]
