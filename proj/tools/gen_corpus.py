#!/usr/bin/env python3
"""Generate src/corpus_kernels.inc: the shipped benchmark kernels with their
expected guest output computed here in Python, independently of the VM.

Usage: gen_corpus.py > src/corpus_kernels.inc
"""

M32 = 0xFFFFFFFF


def s32(v):
    v &= M32
    return v - (1 << 32) if v & 0x80000000 else v


def lcg_values(seed, n, lo, hi):
    out = []
    x = seed
    for _ in range(n):
        x = (x * 1103515245 + 12345) & 0x7FFFFFFF
        out.append(lo + (x >> 16) % (hi - lo + 1))
    return out


def words(values, per_line=8):
    lines = []
    for i in range(0, len(values), per_line):
        lines.append("    .word " + ", ".join(str(v) for v in values[i:i + per_line]))
    return "\n".join(lines)


def rotxor(values):
    c = 0
    for v in values:
        c = (((c << 5) | (c >> 27)) & M32) ^ (v & M32)
    return s32(c)


EXIT = """    li a0, 0
    li a7, 93
    ecall"""

MUL = """# a0 = a0 * a1 (mod 2^32), clobbers t5, t6
mul:
    mv t5, a0
    mv t6, a1
    li a0, 0
mul_loop:
    beqz t6, mul_done
    andi t4, t6, 1
    beqz t4, mul_skip
    add a0, a0, t5
mul_skip:
    slli t5, t5, 1
    srli t6, t6, 1
    j mul_loop
mul_done:
    ret"""


def fib():
    src = """# Recursive fib(15) followed by iterative fib(40).
.text
_start:
    li a0, 15
    jal ra, fib
    li a7, 1
    ecall
    li t0, 0
    li t1, 1
    li t2, 40
iter:
    beqz t2, iter_done
    add t3, t0, t1
    mv t0, t1
    mv t1, t3
    addi t2, t2, -1
    j iter
iter_done:
    mv a0, t0
    li a7, 1
    ecall
""" + EXIT + """
# a0 = fib(a0)
fib:
    li t0, 2
    blt a0, t0, fib_base
    addi sp, sp, -12
    sw ra, 8(sp)
    sw s0, 4(sp)
    sw s1, 0(sp)
    mv s0, a0
    addi a0, s0, -1
    jal ra, fib
    mv s1, a0
    addi a0, s0, -2
    jal ra, fib
    add a0, a0, s1
    lw s1, 0(sp)
    lw s0, 4(sp)
    lw ra, 8(sp)
    addi sp, sp, 12
fib_base:
    ret
"""

    def f(n):
        return n if n < 2 else f(n - 1) + f(n - 2)

    a, b = 0, 1
    for _ in range(40):
        a, b = b, a + b
    return src, f"{f(15)}\n{s32(a)}\n"


def bubble():
    vals = lcg_values(12345, 64, 0, 9999)
    src = """# Bubble sort of 64 words, then min, max and a rotate-xor checksum.
.data
count:
    .word 64
array:
""" + words(vals) + """
.text
_start:
    la s0, array
    la t0, count
    lw s1, 0(t0)
outer:
    li t1, 1
    blt t1, s1, outer_body
    j sorted
outer_body:
    li s2, 0
    mv t2, s0
    li t1, 1
inner:
    bge t1, s1, inner_done
    lw t3, 0(t2)
    lw t4, 4(t2)
    bge t4, t3, no_swap
    sw t4, 0(t2)
    sw t3, 4(t2)
    li s2, 1
no_swap:
    addi t2, t2, 4
    addi t1, t1, 1
    j inner
inner_done:
    addi s1, s1, -1
    bnez s2, outer
sorted:
    lw a0, 0(s0)
    li a7, 1
    ecall
    la t0, count
    lw t1, 0(t0)
    slli t1, t1, 2
    add t1, t1, s0
    lw a0, -4(t1)
    ecall
    li a0, 0
    mv t2, s0
check:
    beq t2, t1, check_done
    lw t3, 0(t2)
    slli t4, a0, 5
    srli t5, a0, 27
    or a0, t4, t5
    xor a0, a0, t3
    addi t2, t2, 4
    j check
check_done:
    li a7, 1
    ecall
""" + EXIT + "\n"
    s = sorted(vals)
    return src, f"{s[0]}\n{s[-1]}\n{rotxor(s)}\n"


def matmul():
    a = lcg_values(7, 64, 0, 15)
    b = lcg_values(99, 64, 0, 15)
    src = """# 8x8 integer matrix multiply with a shift-add multiplier.
.data
mat_a:
""" + words(a) + """
mat_b:
""" + words(b) + """
mat_c:
    .space 256
.text
_start:
    la s0, mat_a
    la s1, mat_b
    la s2, mat_c
    li s3, 0
row:
    li t0, 8
    bge s3, t0, mm_done
    li s4, 0
col:
    li t0, 8
    bge s4, t0, row_next
    li s5, 0
    li s6, 0
dot:
    li t0, 8
    bge s6, t0, dot_done
    slli t1, s3, 3
    add t1, t1, s6
    slli t1, t1, 2
    add t1, t1, s0
    lw a0, 0(t1)
    slli t2, s6, 3
    add t2, t2, s4
    slli t2, t2, 2
    add t2, t2, s1
    lw a1, 0(t2)
    jal ra, mul
    add s5, s5, a0
    addi s6, s6, 1
    j dot
dot_done:
    slli t1, s3, 3
    add t1, t1, s4
    slli t1, t1, 2
    add t1, t1, s2
    sw s5, 0(t1)
    addi s4, s4, 1
    j col
row_next:
    addi s3, s3, 1
    j row
mm_done:
    li a0, 0
    li t0, 0
trace:
    li t1, 8
    bge t0, t1, trace_done
    slli t1, t0, 3
    add t1, t1, t0
    slli t1, t1, 2
    add t1, t1, s2
    lw t2, 0(t1)
    add a0, a0, t2
    addi t0, t0, 1
    j trace
trace_done:
    li a7, 1
    ecall
    li a0, 0
    mv t0, s2
    addi t1, s2, 256
csum:
    beq t0, t1, csum_done
    lw t3, 0(t0)
    slli t4, a0, 5
    srli t5, a0, 27
    or a0, t4, t5
    xor a0, a0, t3
    addi t0, t0, 4
    j csum
csum_done:
    ecall
""" + EXIT + "\n" + MUL + "\n"
    c = [[sum(a[i * 8 + k] * b[k * 8 + j] for k in range(8)) for j in range(8)] for i in range(8)]
    flat = [c[i][j] for i in range(8) for j in range(8)]
    return src, f"{sum(c[i][i] for i in range(8))}\n{rotxor(flat)}\n"


def dot():
    x = lcg_values(2024, 128, -50, 50)
    y = lcg_values(4242, 128, -50, 50)
    src = """# Signed dot product of two 128-element vectors.
.data
vec_x:
""" + words(x) + """
vec_y:
""" + words(y) + """
.text
_start:
    la s0, vec_x
    la s1, vec_y
    li s2, 128
    li s3, 0
loop:
    beqz s2, done
    lw a0, 0(s0)
    lw a1, 0(s1)
    jal ra, mul
    add s3, s3, a0
    addi s0, s0, 4
    addi s1, s1, 4
    addi s2, s2, -1
    j loop
done:
    mv a0, s3
    li a7, 1
    ecall
""" + EXIT + "\n" + MUL + "\n"
    return src, f"{s32(sum(p * q for p, q in zip(x, y)))}\n"


def memcpy():
    src_vals = lcg_values(31337, 1024, -100000, 100000)
    src = """# Copy 1024 words, then a two-sum checksum over the copy.
.data
src_buf:
""" + words(src_vals) + """
dst_buf:
    .space 4096
.text
_start:
    la s0, src_buf
    la s1, dst_buf
    li t0, 1024
copy:
    beqz t0, copy_done
    lw t1, 0(s0)
    sw t1, 0(s1)
    addi s0, s0, 4
    addi s1, s1, 4
    addi t0, t0, -1
    j copy
copy_done:
    la s1, dst_buf
    li t0, 1024
    li a0, 0
    li a1, 0
sum:
    beqz t0, sum_done
    lw t1, 0(s1)
    add a0, a0, t1
    add a1, a1, a0
    addi s1, s1, 4
    addi t0, t0, -1
    j sum
sum_done:
    li a7, 1
    ecall
    mv a0, a1
    ecall
""" + EXIT + "\n"
    s1 = s2 = 0
    for v in src_vals:
        s1 = (s1 + v) & M32
        s2 = (s2 + s1) & M32
    return src, f"{s32(s1)}\n{s32(s2)}\n"


def collatz():
    src = """# Total and maximum Collatz step counts for n = 1..100.
.text
_start:
    li s0, 1
    li s1, 101
    li s2, 0
    li s3, 0
next_n:
    bge s0, s1, report
    mv t0, s0
    li t1, 0
    li t3, 1
step:
    beq t0, t3, n_done
    andi t2, t0, 1
    beqz t2, even
    slli t4, t0, 1
    add t0, t0, t4
    addi t0, t0, 1
    j counted
even:
    srli t0, t0, 1
counted:
    addi t1, t1, 1
    j step
n_done:
    add s2, s2, t1
    bge s3, t1, no_max
    mv s3, t1
no_max:
    addi s0, s0, 1
    j next_n
report:
    mv a0, s2
    li a7, 1
    ecall
    mv a0, s3
    ecall
""" + EXIT + "\n"
    total = mx = 0
    for n in range(1, 101):
        c = 0
        while n != 1:
            n = 3 * n + 1 if n & 1 else n // 2
            c += 1
        total += c
        mx = max(mx, c)
    return src, f"{total}\n{mx}\n"


def cpp_escape(s):
    return s.replace("\\", "\\\\").replace("\"", "\\\"").replace("\n", "\\n")


def main():
    kernels = [("fibonacci", fib), ("bubble_sort", bubble), ("matmul", matmul),
               ("dot_product", dot), ("memcpy_checksum", memcpy), ("collatz", collatz)]
    print("// Generated by tools/gen_corpus.py; expected outputs computed independently in Python.")
    for name, gen in kernels:
        src, out = gen()
        print("{")
        print(f'    "{name}",')
        print('    R"SASM(' + src + ')SASM",')
        print(f'    "{cpp_escape(out)}",')
        print("    0,")
        print("},")


if __name__ == "__main__":
    main()
