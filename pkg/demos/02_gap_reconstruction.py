"""Close a break in the skeleton by pairing line ends that face each other."""

from roadgrade.arr import ArrConfig, make_endpoints, reconstruct
from roadgrade.fixtures import load_fixture
from roadgrade.skeleton import connected_components, prune_spurs, skeletonize

cfg = ArrConfig()  # backtracking 10/15/20 px, 30 degree gates, weights 0.2/0.8, radius 100 px
skel = prune_spurs(skeletonize(load_fixture()), 5)

print("line ends and the direction each one points into its road:")
for e in make_endpoints(skel, cfg):
    print(f"  {e.pixel}: {e.beta:6.1f} deg, segment {e.segment_id}")

fixed, bridges = reconstruct(skel, cfg, return_bridges=True)
for b in bridges:
    print(f"bridge {b.a} -> {b.b}, matching degree {b.degree:.2f}")
print(f"components before {connected_components(skel)[1]}, after {connected_components(fixed)[1]}")

again = reconstruct(fixed, cfg, return_bridges=True)[1]
print(f"running it again adds {len(again)} bridges")
