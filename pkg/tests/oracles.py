"""Reference values computed outside the package (40-digit mpmath or by hand).

    false_dark  = e^-15 * sum_{k<=3} 15^k / k!
    false_bright = 1 - e^-0.5 * sum_{k<=3} 0.5^k / k!
    wilson(500, 1000) at z = 1.959963984540054
"""

FALSE_DARK_15_3 = 2.113785034667616e-04
FALSE_BRIGHT_05_3 = 1.751622556290824e-03
WILSON_500_1000 = (0.4690696003681042, 0.5309303996318958)
HC_445 = 2.7861616404494383     # 1239.84193 / 445
HC_532 = 2.3305299436090228     # 1239.84193 / 532
HALF_LIFE_P = 0.4999764091635173  # 1 - exp(-0.6931)
P_SS_DEFAULT = 1 / 1.1236
