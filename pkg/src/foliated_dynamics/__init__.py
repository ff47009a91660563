"""Foliated geodesic flows of Riccati suspensions over hyperbolic surfaces."""
