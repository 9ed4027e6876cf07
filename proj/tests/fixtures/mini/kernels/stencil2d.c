#pragma ACCEL kernel

void stencil(int orig[8192], int sol[8192], int filter[9])
{
  int r, c, k1, k2;
  int temp, mul;

#pragma ACCEL PIPELINE auto{__PIPE__L0}
#pragma ACCEL TILE FACTOR=auto{__TILE__L0}
  for (r = 0; r < 128 - 2; r++) {
#pragma ACCEL PIPELINE auto{__PIPE__L1}
#pragma ACCEL TILE FACTOR=auto{__TILE__L1}
    for (c = 0; c < 64 - 2; c++) {
      temp = 0;
#pragma ACCEL PARALLEL FACTOR=auto{__PARA__L2}
      for (k1 = 0; k1 < 3; k1++) {
#pragma ACCEL PARALLEL FACTOR=auto{__PARA__L3}
        for (k2 = 0; k2 < 3; k2++) {
          mul = filter[k1 * 3 + k2] * orig[(r + k1) * 64 + c + k2];
          temp += mul;
        }
      }
      if (temp > 255)
        temp = 255;
      else
        temp = temp < 0 ? 0 : temp;
      sol[r * 64 + c] = temp;
    }
  }
}
