"""Strategic matching queues: dispatch policies, exact chain analysis,
equilibria of agents' queue-joining strategies and a coupled simulator."""

__version__ = "0.1.0"
