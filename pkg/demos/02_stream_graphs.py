"""
What a window looks like as a graph
===================================
"""
import numpy as np

from sgdp.stream_graph import build_graph

np.set_printoptions(precision=3, suppress=True)

# delta classes of one window; class 2 is revisited
window = [1, 2, 3, 2, 1, 2]
g = build_graph(window, w_s=0.5)

print("nodes (first occurrence order):", g.nodes.tolist())
print("position -> node:", g.alias.tolist())

print("\nsequential, outgoing")
print(g.m_s_out)
print("\nfull-connect, outgoing (closer pairs weigh more)")
print(g.m_f_out)
print("\nhybrid [in | out], shape", g.m_h.shape)
print(g.m_h)

# w_s=1 keeps only consecutive edges
only_seq = build_graph(window, w_s=1.0)
print("\nw_s=1 gives back the sequential blocks:",
      np.allclose(only_seq.m_h, np.hstack([g.m_s_in, g.m_s_out])))
