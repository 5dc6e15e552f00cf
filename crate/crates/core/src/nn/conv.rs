//! Dense convolution and pooling kernels, forward and backward.
//!
//! All convolutions are stride 1 with 'same' zero padding (odd kernels
//! only); pools are kernel 2 stride 2 with trailing odd extents dropped.
//! Loops run in fixed order for bit-stable results.

#[derive(Debug, Clone)]
pub(crate) struct Conv2dMeta {
    pub b: usize,
    pub ic: usize,
    pub h: usize,
    pub w: usize,
    pub oc: usize,
    pub kh: usize,
    pub kw: usize,
}

impl Conv2dMeta {
    pub fn infer(x: &[usize], weight: &[usize], bias: &[usize]) -> Self {
        assert_eq!(x.len(), 4, "conv2d input must be [b,ic,h,w], got {x:?}");
        assert_eq!(weight.len(), 4, "conv2d weight must be [oc,ic,kh,kw]");
        assert_eq!(bias.len(), 1, "conv2d bias must be [oc]");
        let m = Self {
            b: x[0],
            ic: x[1],
            h: x[2],
            w: x[3],
            oc: weight[0],
            kh: weight[2],
            kw: weight[3],
        };
        assert_eq!(weight[1], m.ic, "conv2d channel mismatch");
        assert_eq!(bias[0], m.oc, "conv2d bias mismatch");
        assert!(m.kh % 2 == 1 && m.kw % 2 == 1, "conv2d kernels must be odd");
        m
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.b, self.oc, self.h, self.w]
    }
}

pub(crate) fn conv2d_forward(x: &[f64], w: &[f64], bias: &[f64], m: &Conv2dMeta) -> Vec<f64> {
    let (ph, pw) = (m.kh / 2, m.kw / 2);
    let mut y = vec![0.0; m.b * m.oc * m.h * m.w];
    for b in 0..m.b {
        for oc in 0..m.oc {
            let ybase = (b * m.oc + oc) * m.h * m.w;
            for oy in 0..m.h {
                for ox in 0..m.w {
                    let mut acc = bias[oc];
                    for ic in 0..m.ic {
                        let xbase = (b * m.ic + ic) * m.h * m.w;
                        let wbase = (oc * m.ic + ic) * m.kh * m.kw;
                        for ky in 0..m.kh {
                            let iy = oy as isize + ky as isize - ph as isize;
                            if iy < 0 || iy >= m.h as isize {
                                continue;
                            }
                            let iy = iy as usize;
                            for kx in 0..m.kw {
                                let ix = ox as isize + kx as isize - pw as isize;
                                if ix < 0 || ix >= m.w as isize {
                                    continue;
                                }
                                acc += x[xbase + iy * m.w + ix as usize]
                                    * w[wbase + ky * m.kw + kx];
                            }
                        }
                    }
                    y[ybase + oy * m.w + ox] = acc;
                }
            }
        }
    }
    y
}

pub(crate) fn conv2d_backward(
    x: &[f64],
    w: &[f64],
    gout: &[f64],
    m: &Conv2dMeta,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (ph, pw) = (m.kh / 2, m.kw / 2);
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; m.oc];
    for b in 0..m.b {
        for oc in 0..m.oc {
            let ybase = (b * m.oc + oc) * m.h * m.w;
            for oy in 0..m.h {
                for ox in 0..m.w {
                    let go = gout[ybase + oy * m.w + ox];
                    if go == 0.0 {
                        continue;
                    }
                    db[oc] += go;
                    for ic in 0..m.ic {
                        let xbase = (b * m.ic + ic) * m.h * m.w;
                        let wbase = (oc * m.ic + ic) * m.kh * m.kw;
                        for ky in 0..m.kh {
                            let iy = oy as isize + ky as isize - ph as isize;
                            if iy < 0 || iy >= m.h as isize {
                                continue;
                            }
                            let iy = iy as usize;
                            for kx in 0..m.kw {
                                let ix = ox as isize + kx as isize - pw as isize;
                                if ix < 0 || ix >= m.w as isize {
                                    continue;
                                }
                                let xi = xbase + iy * m.w + ix as usize;
                                let wi = wbase + ky * m.kw + kx;
                                dx[xi] += go * w[wi];
                                dw[wi] += go * x[xi];
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

#[derive(Debug, Clone)]
pub(crate) struct Pool2dMeta {
    pub b: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Pool2dMeta {
    pub fn infer(x: &[usize]) -> Self {
        assert_eq!(x.len(), 4, "maxpool2d input must be [b,c,h,w]");
        assert!(x[2] >= 2 && x[3] >= 2, "maxpool2d input too small: {x:?}");
        Self {
            b: x[0],
            c: x[1],
            h: x[2],
            w: x[3],
            oh: x[2] / 2,
            ow: x[3] / 2,
        }
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.b, self.c, self.oh, self.ow]
    }
}

pub(crate) fn maxpool2d_forward(x: &[f64], m: &Pool2dMeta) -> (Vec<f64>, Vec<usize>) {
    let mut y = vec![0.0; m.b * m.c * m.oh * m.ow];
    let mut arg = vec![0usize; y.len()];
    for bc in 0..m.b * m.c {
        let xbase = bc * m.h * m.w;
        let ybase = bc * m.oh * m.ow;
        for oy in 0..m.oh {
            for ox in 0..m.ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0usize;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let i = xbase + (oy * 2 + dy) * m.w + ox * 2 + dx;
                        if x[i] > best {
                            best = x[i];
                            best_i = i;
                        }
                    }
                }
                y[ybase + oy * m.ow + ox] = best;
                arg[ybase + oy * m.ow + ox] = best_i;
            }
        }
    }
    (y, arg)
}

#[derive(Debug, Clone)]
pub(crate) struct Conv3dMeta {
    pub b: usize,
    pub ic: usize,
    pub d: usize,
    pub h: usize,
    pub w: usize,
    pub oc: usize,
    pub kd: usize,
    pub kh: usize,
    pub kw: usize,
}

impl Conv3dMeta {
    pub fn infer(x: &[usize], weight: &[usize], bias: &[usize]) -> Self {
        assert_eq!(x.len(), 5, "conv3d input must be [b,ic,d,h,w], got {x:?}");
        assert_eq!(weight.len(), 5, "conv3d weight must be [oc,ic,kd,kh,kw]");
        assert_eq!(bias.len(), 1, "conv3d bias must be [oc]");
        let m = Self {
            b: x[0],
            ic: x[1],
            d: x[2],
            h: x[3],
            w: x[4],
            oc: weight[0],
            kd: weight[2],
            kh: weight[3],
            kw: weight[4],
        };
        assert_eq!(weight[1], m.ic, "conv3d channel mismatch");
        assert_eq!(bias[0], m.oc, "conv3d bias mismatch");
        assert!(
            m.kd % 2 == 1 && m.kh % 2 == 1 && m.kw % 2 == 1,
            "conv3d kernels must be odd"
        );
        m
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.b, self.oc, self.d, self.h, self.w]
    }
}

pub(crate) fn conv3d_forward(x: &[f64], w: &[f64], bias: &[f64], m: &Conv3dMeta) -> Vec<f64> {
    let (pd, ph, pw) = (m.kd / 2, m.kh / 2, m.kw / 2);
    let hw = m.h * m.w;
    let dhw = m.d * hw;
    let mut y = vec![0.0; m.b * m.oc * dhw];
    for b in 0..m.b {
        for oc in 0..m.oc {
            let ybase = (b * m.oc + oc) * dhw;
            for oz in 0..m.d {
                for oy in 0..m.h {
                    for ox in 0..m.w {
                        let mut acc = bias[oc];
                        for ic in 0..m.ic {
                            let xbase = (b * m.ic + ic) * dhw;
                            let wbase = (oc * m.ic + ic) * m.kd * m.kh * m.kw;
                            for kz in 0..m.kd {
                                let iz = oz as isize + kz as isize - pd as isize;
                                if iz < 0 || iz >= m.d as isize {
                                    continue;
                                }
                                for ky in 0..m.kh {
                                    let iy = oy as isize + ky as isize - ph as isize;
                                    if iy < 0 || iy >= m.h as isize {
                                        continue;
                                    }
                                    for kx in 0..m.kw {
                                        let ix = ox as isize + kx as isize - pw as isize;
                                        if ix < 0 || ix >= m.w as isize {
                                            continue;
                                        }
                                        acc += x[xbase
                                            + iz as usize * hw
                                            + iy as usize * m.w
                                            + ix as usize]
                                            * w[wbase + (kz * m.kh + ky) * m.kw + kx];
                                    }
                                }
                            }
                        }
                        y[ybase + oz * hw + oy * m.w + ox] = acc;
                    }
                }
            }
        }
    }
    y
}

pub(crate) fn conv3d_backward(
    x: &[f64],
    w: &[f64],
    gout: &[f64],
    m: &Conv3dMeta,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (pd, ph, pw) = (m.kd / 2, m.kh / 2, m.kw / 2);
    let hw = m.h * m.w;
    let dhw = m.d * hw;
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; m.oc];
    for b in 0..m.b {
        for oc in 0..m.oc {
            let ybase = (b * m.oc + oc) * dhw;
            for oz in 0..m.d {
                for oy in 0..m.h {
                    for ox in 0..m.w {
                        let go = gout[ybase + oz * hw + oy * m.w + ox];
                        if go == 0.0 {
                            continue;
                        }
                        db[oc] += go;
                        for ic in 0..m.ic {
                            let xbase = (b * m.ic + ic) * dhw;
                            let wbase = (oc * m.ic + ic) * m.kd * m.kh * m.kw;
                            for kz in 0..m.kd {
                                let iz = oz as isize + kz as isize - pd as isize;
                                if iz < 0 || iz >= m.d as isize {
                                    continue;
                                }
                                for ky in 0..m.kh {
                                    let iy = oy as isize + ky as isize - ph as isize;
                                    if iy < 0 || iy >= m.h as isize {
                                        continue;
                                    }
                                    for kx in 0..m.kw {
                                        let ix = ox as isize + kx as isize - pw as isize;
                                        if ix < 0 || ix >= m.w as isize {
                                            continue;
                                        }
                                        let xi = xbase
                                            + iz as usize * hw
                                            + iy as usize * m.w
                                            + ix as usize;
                                        let wi = wbase + (kz * m.kh + ky) * m.kw + kx;
                                        dx[xi] += go * w[wi];
                                        dw[wi] += go * x[xi];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

#[derive(Debug, Clone)]
pub(crate) struct Pool3dMeta {
    pub b: usize,
    pub c: usize,
    pub d: usize,
    pub h: usize,
    pub w: usize,
    pub od: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Pool3dMeta {
    pub fn infer(x: &[usize]) -> Self {
        assert_eq!(x.len(), 5, "maxpool3d input must be [b,c,d,h,w]");
        assert!(x[2] >= 2 && x[3] >= 2 && x[4] >= 2, "maxpool3d input too small");
        Self {
            b: x[0],
            c: x[1],
            d: x[2],
            h: x[3],
            w: x[4],
            od: x[2] / 2,
            oh: x[3] / 2,
            ow: x[4] / 2,
        }
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.b, self.c, self.od, self.oh, self.ow]
    }
}

pub(crate) fn maxpool3d_forward(x: &[f64], m: &Pool3dMeta) -> (Vec<f64>, Vec<usize>) {
    let hw = m.h * m.w;
    let out_hw = m.oh * m.ow;
    let mut y = vec![0.0; m.b * m.c * m.od * out_hw];
    let mut arg = vec![0usize; y.len()];
    for bc in 0..m.b * m.c {
        let xbase = bc * m.d * hw;
        let ybase = bc * m.od * out_hw;
        for oz in 0..m.od {
            for oy in 0..m.oh {
                for ox in 0..m.ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = 0usize;
                    for dz in 0..2 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let i = xbase
                                    + (oz * 2 + dz) * hw
                                    + (oy * 2 + dy) * m.w
                                    + ox * 2
                                    + dx;
                                if x[i] > best {
                                    best = x[i];
                                    best_i = i;
                                }
                            }
                        }
                    }
                    y[ybase + oz * out_hw + oy * m.ow + ox] = best;
                    arg[ybase + oz * out_hw + oy * m.ow + ox] = best_i;
                }
            }
        }
    }
    (y, arg)
}
