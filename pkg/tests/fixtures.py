"""Small literal fixtures shared by the oracle script and the tests."""

M8_X = [[0.345, 0.557], [0.626, 0.498], [0.723, 0.257], [0.199, 0.55],
        [0.688, 0.826], [0.115, 0.741], [0.015, 0.15], [0.499, 0.94]]
M8_A = [1, 0, 1, 0, 0, 1, 0, 1]

I10_X = [[-2.885, -0.311], [-0.534, 2.19], [0.033, -0.981], [-0.871, 1.924],
         [-0.617, -0.118], [-0.319, 0.503], [-0.313, 0.748], [-1.078, 0.928],
         [0.314, 0.202], [-1.312, -0.473]]
I10_A = [1, 0, 0, 1, 0, 1, 1, 0, 1, 0]
I10_Y = [-0.284, -1.19, 0.327, 0.646, -0.17, 0.885, -1.212, 1.174, 0.391, -1.242]

L20_X = [-1.904, -1.404, 0.048, 2.056, 1.154, 0.331, 1.558, -0.264, -0.043, -0.26,
         0.218, 0.019, 0.14, 0.496, 0.923, 2.109, 1.179, 0.736, 0.175, 0.393]
L20_A = [0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0]

O15_X = [[0.48, -1.598], [0.507, 0.368], [-0.68, -0.301], [0.041, 0.631], [0.354, 0.904],
         [1.15, -0.482], [0.594, 0.002], [-0.302, -0.792], [-0.438, -0.797], [-0.16, 0.049],
         [0.201, 1.499], [-0.705, -1.457], [1.666, -0.814], [1.477, 1.238], [-1.116, -1.281]]
O15_Y = [-1.503, -2.124, 1.052, 0.247, -0.911, 0.839, -0.404, -1.705, -0.769, -0.587,
         -0.944, 0.5, 2.721, 0.838, 1.486]

C12_X = [1.105, 0.565, -0.011, 0.268, -0.009, -2.147, 1.932, 0.157, 1.656, -0.242, 0.393, -1.204]
C12_Y = [-2.812, -0.376, 3.217, -1.537, 1.173, -1.485, -1.481, -1.042, -0.022, -1.35, 0.544,
         1.284]
C12_A = [1, 0, 1, 1, 0, 0, 1, 0, 1, 0, 1, 0]
# fold_assignment(12, 2, seed=3); frozen so the oracle does not depend on the RNG
C12_SEED = 3
C12_FOLDS = [0, 1, 0, 0, 0, 1, 1, 1, 1, 0, 1, 0]

E6_Z = [0.913, 0.74, 0.6, 0.885, 0.309, 0.933]
E6_Y = [-1.131, -1.327, 0.039, -0.359, 0.358, 0.885]
E6_A = [1, 0, 1, 0, 1, 0]
E6_GRID = [0.4, 0.7, 1.0]

E12_X = [[-0.897, -0.396], [0.228, -0.218], [-0.425, 0.929], [-1.103, -0.786],
         [-1.099, 1.76], [-1.108, -1.13], [0.379, -1.265], [0.734, -1.481],
         [-0.573, -0.393], [-0.792, -1.336], [0.35, -1.739], [-1.24, 0.26]]
E12_Z = [0.317, 0.902, -0.824, -0.218, 0.86, -0.552, -0.13, 0.575, -0.66, -0.563, -0.033, 0.366]
E12_Y = [0.766, 1.894, 0.27, 1.757, -1.57, -0.179, 0.007, -1.059, 2.047, 0.109, -0.773, -0.898]
E12_A = [1, 1, 0, 0, 1, 0, 1, 0, 1, 0, 0, 1]
E12_GRID = [-0.5, 0.0, 0.5]
E12_H = 0.6

E20_X = [-0.919, -0.993, -1.35, -1.036, 0.607, -1.196, 0.456, -1.154, -0.686, 0.984,
         -1.324, -0.857, 1.361, -0.101, -0.351, -0.587, 0.421, -1.51, -1.56, -0.046]
E20_Z = [0.455, -0.404, -0.983, 0.051, 0.758, -0.057, 0.729, -0.814, 0.357, 0.603,
         0.018, 0.695, 0.984, 0.472, 0.433, 0.566, 0.724, 0.341, 0.563, 0.84]
E20_Y = [0.969, -0.992, -0.791, 1.633, 0.26, -2.228, -0.685, -0.19, 1.427, -0.906,
         0.169, 0.929, 0.348, 0.584, -1.917, -0.683, 0.374, 1.4, -0.234, -0.172]
E20_A = [1, 0, 1, 0, 0, 1, 1, 0, 1, 1, 0, 0, 1, 0, 1, 0, 1, 1, 0, 0]
E20_GRID = [-0.5, 0.0, 0.5]
E20_HZ = 1.0
E20_HPI = 0.5
