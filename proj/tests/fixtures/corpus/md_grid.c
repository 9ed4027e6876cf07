#pragma ACCEL kernel

void md(int n_points[64], double force[640], double position[640])
{
  int b0, p_idx, q_idx;
  double dx, r2inv, sum;

#pragma ACCEL PIPELINE auto{__PIPE__L0}
  loop_grid: for (b0 = 63; b0 >= 0; b0--) {
    p_idx = 0;
#pragma ACCEL PARALLEL FACTOR=auto{__PARA__L1}
    loop_p: while (p_idx < n_points[b0]) {
      sum = 0.0;
      q_idx = 0;
      do {
        dx = position[b0 * 10 + p_idx] - position[b0 * 10 + q_idx];
        r2inv = 1.0 / (dx * dx + 0.01);
        sum += r2inv;
        q_idx++;
      } while (q_idx < n_points[b0]);
      force[b0 * 10 + p_idx] = sum;
      p_idx++;
    }
  }
  for (b0 = 0; b0 != 640; b0 += 64) force[b0] = 0.0;
}
