"""The four demonstration set-ups: block, thin plate, cylindrical shell
and doubly-curved shell.

Desk scale (the default) keeps the source geometry, loads and materials
but shrinks the meshes and sample grids to workstation size; paper scale
restores the published discretization parameters.
"""

import math

def _materials(t_max):
    return f"""\
[material]
t_min = 373.15
t_max = {t_max}
theta_mode = table

[material.matrix]
# SiC
density = 3210.0
youngs_modulus = 350.0, -3.04e-2
poisson = 0.25
thermal_modulus = 3.50
specific_heat = 660.0, 1.915, -1.491e-3
conductivity = 250.0, 0.02728
two_way_modulus = 1306.025

[material.inclusion]
# carbon
density = 1760.0
youngs_modulus = 220.0, -1.10e-4
poisson = 0.20
thermal_modulus = 9273.0, -57.53, 0.0817
specific_heat = 710.0, 1.781, -1.976e-3
conductivity = 8.0, 0.02535
two_way_modulus = 3.46e6, -2.147e4, 30.486
"""


def _block(scale):
    desk = scale == "desk"
    return f"""\
# heterogeneous block, SiC matrix with spherical carbon inclusions
[geometry]
frame = cartesian
box_lo = 0, 0, 0
box_hi = 1, 1, 1
xi = 0.2
unit = cm
inclusion = sphere
radius = 0.35

{_materials(1073.15)}
[loads]
t_ref = 373.15
heat_source = 5000
body_force = 0, 0, -10000
bc_disp_faces = x-, x+, y-, y+
bc_temp = z-:373.15, z+:773.15

[time]
dt = 0.01
steps = 100

[sampling]
tbar_count = {5 if desk else 25}
alpha3_count = 1
cell_divisions = {8 if desk else 25}
macro_divisions = {"10, 10, 10" if desk else "50, 50, 50"}
dns_divisions_per_cell = 8

[output]
stride = 10
"""


def _plate(scale):
    desk = scale == "desk"
    return f"""\
# heterogeneous thin plate (same constituents as the block)
[geometry]
frame = cartesian
box_lo = 0, 0, 0
box_hi = 1, 1, 0.2
xi = 0.04
unit = cm
inclusion = sphere
radius = 0.35

{_materials(1073.15)}
[loads]
t_ref = 373.15
heat_source = 10000
body_force = 0, 0, -20000
bc_disp_faces = x-, x+, y-, y+
bc_temp = z-:373.15, z+:773.15

[time]
dt = 0.01
steps = {50 if desk else 100}

[sampling]
tbar_count = {5 if desk else 25}
alpha3_count = 1
cell_divisions = {8 if desk else 25}
macro_divisions = {"10, 10, 4" if desk else "50, 50, 10"}
dns_divisions_per_cell = 8

[output]
stride = 10
"""


def _cylinder(scale):
    desk = scale == "desk"
    pi = math.pi
    return f"""\
# heterogeneous cylindrical shell (axial, angular, thickness coordinates)
[geometry]
frame = cylindrical
r2 = {pi!r}
box_lo = 0, {-pi / 6!r}, {-pi / 12!r}
box_hi = {3 * pi / 4!r}, {pi / 6!r}, {pi / 12!r}
xi = {pi / 36!r}
unit = cm
inclusion = sphere
radius = 0.35

{_materials(773.15)}
[loads]
t_ref = 373.15
heat_source = 5000
body_force = 0, 0, -40000
bc_disp_faces = x-, x+, y-, y+
bc_temp = z-:373.15

[time]
dt = 0.02
steps = 50

[sampling]
tbar_count = {5 if desk else 14}
alpha3_count = 5
cell_divisions = {8 if desk else 25}
macro_divisions = {"12, 8, 4" if desk else "54, 24, 12"}
dns_divisions_per_cell = 8

[output]
stride = 10
"""


def _doubly_curved(scale):
    desk = scale == "desk"
    pi = math.pi
    return f"""\
# heterogeneous doubly-curved shell patch
[geometry]
frame = doubly_curved
r1 = {pi!r}
r2 = {pi!r}
box_lo = {-pi / 9!r}, {-pi / 9!r}, {-pi / 54!r}
box_hi = {pi / 9!r}, {pi / 9!r}, {pi / 54!r}
xi = {pi / 108!r}
unit = cm
inclusion = sphere
radius = 0.35

{_materials(773.15)}
[loads]
t_ref = 373.15
heat_source = 100000
body_force = 0, 0, -120000
bc_disp_faces = x-, x+, y-, y+
bc_temp = z-:373.15

[time]
dt = 0.02
steps = 50

[sampling]
tbar_count = {5 if desk else 14}
alpha3_count = 5
cell_divisions = {8 if desk else 25}
macro_divisions = {"12, 12, 4" if desk else "48, 48, 8"}
dns_divisions_per_cell = 8

[output]
stride = 10
"""


PRESETS = {
    "block": _block,
    "plate": _plate,
    "cylinder": _cylinder,
    "doubly-curved": _doubly_curved,
}


def demo_config(name, scale="desk"):
    if name not in PRESETS:
        raise KeyError(f"unknown demo {name!r}; "
                       f"choose from {sorted(PRESETS)}")
    if scale not in ("desk", "paper"):
        raise ValueError("scale must be 'desk' or 'paper'")
    return PRESETS[name](scale)
